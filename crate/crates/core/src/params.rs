//! System parameters and unit conventions.
//!
//! Everything internal is dimensionless in units of the mechanical frequency
//! `omega_m = 1`. SI quantities appear only in [`ExperimentalParams`] and are
//! converted once at the boundary.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::meanfield::EffectiveCoupling;

/// CODATA constants, used only by the SI conversion layer.
pub mod constants {
    pub const HBAR: f64 = 1.054_571_817e-34; // J s
    pub const K_B: f64 = 1.380_649e-23; // J/K
    pub const C_LIGHT: f64 = 2.997_924_58e8; // m/s
}

/// Dimensionless system parameters, all rates in units of `omega_m`.
///
/// The drive `E(t) = sum_n E_n e^(-i n Omega t)` is stored as a sparse map
/// from harmonic index to complex amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Mechanical frequency; fixed to 1 by the unit convention.
    pub omega_m: f64,
    /// Cavity amplitude decay rate.
    pub kappa: f64,
    /// Mechanical energy decay rate.
    pub gamma_m: f64,
    /// Cavity-laser detuning `Delta_0 = omega_c - omega_l`.
    pub delta0: f64,
    /// Single-photon optomechanical coupling.
    pub g: f64,
    /// OPA gain.
    pub lambda_gain: f64,
    /// OPA pump phase (rad).
    pub theta: f64,
    /// Modulation frequency `Omega`.
    pub omega_mod: f64,
    /// Pump detuning `Delta_p`; defaults to `Omega/2`.
    pub delta_p: f64,
    /// Drive harmonics `n -> E_n`.
    pub drive: BTreeMap<i32, Complex64>,
    /// Thermal photon occupation.
    pub n_a: f64,
    /// Thermal phonon occupation.
    pub n_m: f64,
}

impl PhysicalParams {
    /// Parameters with a single carrier tone and everything else off.
    pub fn new(kappa: f64, gamma_m: f64, delta0: f64, g: f64) -> Self {
        PhysicalParams {
            omega_m: 1.0,
            kappa,
            gamma_m,
            delta0,
            g,
            lambda_gain: 0.0,
            theta: 0.0,
            omega_mod: 2.0,
            delta_p: 1.0,
            drive: BTreeMap::new(),
            n_a: 0.0,
            n_m: 0.0,
        }
    }

    /// The Fig. 1 working point: `(kappa, Delta_0, g, gamma_m) =
    /// (0.1, 1.06, 4e-6, 1e-6)`, `(E_0, E_+1, E_-1) = (1.4, 0.7, 0.7)e4`,
    /// `Lambda = 0.3 kappa`, `theta = pi`, `Omega = 2`, `n_m = 100`.
    pub fn figure1() -> Self {
        let mut p = PhysicalParams::new(0.1, 1e-6, 1.06, 4e-6);
        p.lambda_gain = 0.3 * p.kappa;
        p.theta = std::f64::consts::PI;
        p.n_m = 100.0;
        p.drive.insert(0, Complex64::new(1.4e4, 0.0));
        p.drive.insert(1, Complex64::new(0.7e4, 0.0));
        p.drive.insert(-1, Complex64::new(0.7e4, 0.0));
        p
    }

    /// Modulation period `tau = 2 pi / Omega`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_mod
    }

    /// Normalized OPA gain `Lambda_bar = 2 Lambda / kappa`.
    pub fn lambda_bar(&self) -> f64 {
        2.0 * self.lambda_gain / self.kappa
    }

    /// Drive amplitude at harmonic `n` (zero outside the stored support).
    pub fn drive_amp(&self, n: i32) -> Complex64 {
        self.drive.get(&n).copied().unwrap_or(Complex64::ZERO)
    }

    /// Drive field `E(t) = sum_n E_n e^(-i n Omega t)`.
    pub fn drive_field(&self, t: f64) -> Complex64 {
        let mut e = Complex64::ZERO;
        for (&n, &en) in &self.drive {
            e += en * Complex64::new(0.0, -(n as f64) * self.omega_mod * t).exp();
        }
        e
    }

    /// Largest harmonic index with a nonzero drive amplitude.
    pub fn max_drive_harmonic(&self) -> i32 {
        self.drive
            .keys()
            .map(|n| n.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m == 1.0) {
            return Err(Error::Validation {
                field: "omega_m",
                message: format!("must be 1 (unit convention), got {}", self.omega_m),
            });
        }
        for (field, v) in [("kappa", self.kappa), ("gamma_m", self.gamma_m)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation {
                    field,
                    message: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.lambda_gain >= 0.0) {
            return Err(Error::Validation {
                field: "lambda",
                message: format!("must be nonnegative, got {}", self.lambda_gain),
            });
        }
        if !(self.omega_mod > 0.0) {
            return Err(Error::Validation {
                field: "omega_mod",
                message: format!("must be positive, got {}", self.omega_mod),
            });
        }
        for (field, v) in [("n_a", self.n_a), ("n_m", self.n_m)] {
            if !(v >= 0.0) {
                return Err(Error::Validation {
                    field,
                    message: format!("occupation must be nonnegative, got {v}"),
                });
            }
        }
        for (&n, &en) in &self.drive {
            if !en.re.is_finite() || !en.im.is_finite() {
                return Err(Error::Validation {
                    field: "drive",
                    message: format!("E_{n} is not finite"),
                });
            }
        }
        Ok(())
    }
}

/// SI-facing parameter set for a Fabry-Perot cavity with a movable mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalParams {
    /// Cavity length (m).
    pub cavity_length: f64,
    /// Cavity finesse.
    pub finesse: f64,
    /// Driving laser wavelength (m).
    pub laser_wavelength: f64,
    /// Movable mirror effective mass (kg).
    pub mirror_mass: f64,
    /// Mechanical frequency `omega_m / 2 pi` (Hz).
    pub mech_freq_hz: f64,
    /// Mechanical quality factor `Q = omega_m / gamma_m`.
    pub quality_factor: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    /// Sideband powers `n -> P_n` (W).
    pub sideband_powers: BTreeMap<i32, f64>,
}

impl ExperimentalParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cavity_length", self.cavity_length),
            ("finesse", self.finesse),
            ("laser_wavelength", self.laser_wavelength),
            ("mirror_mass", self.mirror_mass),
            ("mech_freq_hz", self.mech_freq_hz),
            ("quality_factor", self.quality_factor),
            ("temperature", self.temperature),
        ];
        for (field, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation {
                    field,
                    message: format!("must be strictly positive, got {v}"),
                });
            }
        }
        for (&n, &p) in &self.sideband_powers {
            if !(p >= 0.0) {
                return Err(Error::Validation {
                    field: "sideband_powers",
                    message: format!("P_{n} must be nonnegative, got {p}"),
                });
            }
        }
        Ok(())
    }

    /// Whether the Markovian treatment of the mechanical bath is justified.
    pub fn markovian_ok(&self) -> bool {
        self.quality_factor >= 1e3
    }
}

fn bose_occupation(energy_over_kt: f64) -> f64 {
    // exp_m1 overflows harmlessly to +inf for optical frequencies; 1/inf = 0.
    1.0 / energy_over_kt.exp_m1()
}

/// Converts SI cavity parameters to the dimensionless set with `omega_m = 1`.
///
/// Rates: `kappa = pi c / (2 F L)`, `gamma_m = omega_m / Q`,
/// `g = x_zpf omega_c / L` with `x_zpf = sqrt(hbar / 2 m omega_m)`, and drive
/// amplitudes `|E_n| = sqrt(2 kappa P_n / hbar omega_l)` (real nonnegative by
/// default; phases are configurable on the result). Occupations are Bose
/// factors at `omega_m` and `omega_c`.
pub fn from_experimental(exp: &ExperimentalParams) -> Result<PhysicalParams> {
    use constants::*;
    exp.validate()?;

    let omega_m = 2.0 * std::f64::consts::PI * exp.mech_freq_hz;
    let kappa = std::f64::consts::PI * C_LIGHT / (2.0 * exp.finesse * exp.cavity_length);
    let gamma_m = omega_m / exp.quality_factor;
    let omega_c = 2.0 * std::f64::consts::PI * C_LIGHT / exp.laser_wavelength;
    let x_zpf = (HBAR / (2.0 * exp.mirror_mass * omega_m)).sqrt();
    let g = x_zpf * omega_c / exp.cavity_length;

    let n_m = bose_occupation(HBAR * omega_m / (K_B * exp.temperature));
    let n_a = bose_occupation(HBAR * omega_c / (K_B * exp.temperature));

    let mut p = PhysicalParams::new(kappa / omega_m, gamma_m / omega_m, 0.0, g / omega_m);
    p.n_m = n_m;
    p.n_a = n_a;
    for (&n, &pn) in &exp.sideband_powers {
        let en = (2.0 * kappa * pn / (HBAR * omega_c)).sqrt() / omega_m;
        p.drive.insert(n, Complex64::new(en, 0.0));
    }
    p.delta_p = p.omega_mod / 2.0;
    Ok(p)
}

/// Gain/cooperativity figures of merit built from a coupling configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities {
    /// Normalized OPA gain `2 Lambda / kappa`.
    pub lambda_bar: f64,
    /// Cooperativity `C = 4 |g0|^2 / (kappa gamma_m)`.
    pub cooperativity: f64,
    /// Reduced cooperativity `C_tilde = C (1 - tanh^2 r)`.
    pub c_tilde: f64,
    /// `eta = (cosh r - sinh r)^2 / (n_m + 1/2) + gamma_m / kappa`.
    pub eta: f64,
    /// Optimal normalized gain, clamped to `[0, 1)`.
    pub lambda_bar_opt: f64,
    /// True when the optimal-gain formula landed at or beyond the instability
    /// boundary and was clamped.
    pub lambda_bar_opt_clamped: bool,
    /// Cooperation threshold `C_thr_tilde = 4 (1/eta - 1)`.
    pub c_tilde_thr: f64,
    /// Gain-saturation threshold `C_ins_tilde = 8 (2/eta - 1)`.
    pub c_tilde_ins: f64,
}

/// Computes the derived gain/cooperativity quantities for a coupling.
pub fn derived(params: &PhysicalParams, coupling: &EffectiveCoupling) -> Result<DerivedQuantities> {
    let g0 = coupling.g0.norm();
    let g1 = coupling.g1.norm();
    if g1 >= g0 {
        return Err(Error::DegenerateCoupling { g0_abs: g0, g1_abs: g1 });
    }
    let r = coupling.squeeze_parameter();
    let lambda_bar = params.lambda_bar();
    let cooperativity = 4.0 * g0 * g0 / (params.kappa * params.gamma_m);
    let tanh_r = g1 / g0;
    let c_tilde = cooperativity * (1.0 - tanh_r * tanh_r);
    let eta = (-2.0 * r).exp() / (params.n_m + 0.5) + params.gamma_m / params.kappa;
    let c_tilde_thr = 4.0 * (1.0 / eta - 1.0);
    let c_tilde_ins = 8.0 * (2.0 / eta - 1.0);
    let raw = optimal_gain_raw(c_tilde, eta);
    Ok(DerivedQuantities {
        lambda_bar,
        cooperativity,
        c_tilde,
        eta,
        lambda_bar_opt: raw.clamp(0.0, 1.0),
        lambda_bar_opt_clamped: raw >= 1.0,
        c_tilde_thr,
        c_tilde_ins,
    })
}

/// `Lambda_bar_opt = (eta/2)(1 + sqrt(1 + C_tilde/eta)) - 1`, unclamped.
pub fn optimal_gain_raw(c_tilde: f64, eta: f64) -> f64 {
    eta / 2.0 * (1.0 + (1.0 + c_tilde / eta).sqrt()) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groblacher_set() -> ExperimentalParams {
        let mut powers = BTreeMap::new();
        powers.insert(0, 1e-3);
        ExperimentalParams {
            cavity_length: 25e-3,
            finesse: 1.4e4,
            laser_wavelength: 1064e-9,
            mirror_mass: 150e-12,
            mech_freq_hz: 1e6,
            quality_factor: 1e6,
            temperature: 5e-3,
            sideband_powers: powers,
        }
    }

    #[test]
    fn si_conversion_reference_point() {
        let p = from_experimental(&groblacher_set()).unwrap();
        // frozen from the conversion formulas with CODATA constants
        assert!((p.kappa - 2.141374700e-1).abs() < 1e-9);
        assert!((p.gamma_m - 1e-6).abs() < 1e-16);
        assert!((p.g - 2.665793994e-6).abs() < 1e-14);
        assert!((p.drive_amp(0).re - 1.910749899e4).abs() < 1e-4);
        assert!((p.n_m - 103.6838955531).abs() < 1e-8);
        assert_eq!(p.n_a, 0.0);
        // same order as the regime used in the figures
        assert!(p.kappa > 0.05 && p.kappa < 0.5);
        assert!(p.n_m > 50.0 && p.n_m < 150.0);
    }

    #[test]
    fn zero_temperature_occupations_vanish() {
        let mut exp = groblacher_set();
        exp.temperature = 1e-30;
        let p = from_experimental(&exp).unwrap();
        assert_eq!(p.n_m, 0.0);
        assert_eq!(p.n_a, 0.0);
    }

    #[test]
    fn quality_factor_sets_mechanical_damping() {
        let p = from_experimental(&groblacher_set()).unwrap();
        assert!((p.gamma_m - 1.0 / 1e6).abs() < 1e-18);
    }

    #[test]
    fn nonpositive_field_is_named_in_error() {
        let mut exp = groblacher_set();
        exp.mirror_mass = -1.0;
        match from_experimental(&exp) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "mirror_mass"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn si_round_trip_reproduces_rates() {
        let exp = groblacher_set();
        let p = from_experimental(&exp).unwrap();
        let omega_m = 2.0 * std::f64::consts::PI * exp.mech_freq_hz;
        let kappa_si = std::f64::consts::PI * constants::C_LIGHT
            / (2.0 * exp.finesse * exp.cavity_length);
        let rel = (p.kappa * omega_m - kappa_si).abs() / kappa_si;
        assert!(rel < 1e-10, "round trip rel err {rel}");
        let gamma_si = omega_m / exp.quality_factor;
        assert!((p.gamma_m * omega_m - gamma_si).abs() / gamma_si < 1e-10);
    }

    #[test]
    fn thresholds_match_reference_values() {
        // tanh r = 0.6, n_m = 100, gamma/kappa = 1e-5
        let eta = 0.25 / 100.5 + 1e-5;
        let thr = 4.0 * (1.0 / eta - 1.0);
        let ins = 8.0 * (2.0 / eta - 1.0);
        assert!((thr - 1.6e3).abs() / 1.6e3 < 0.02, "thr = {thr}");
        assert!((ins - 6.4e3).abs() / 6.4e3 < 0.02, "ins = {ins}");
        // in terms of the bare cooperativity
        assert!((thr / 0.64 - 2.5e3).abs() / 2.5e3 < 0.02);
        assert!((ins / 0.64 - 1.0e4).abs() / 1.0e4 < 0.02);
    }

    #[test]
    fn optimal_gain_vanishes_at_threshold() {
        for eta in [2.5e-3, 1e-2, 0.3] {
            let thr = 4.0 * (1.0 / eta - 1.0);
            let ins = 8.0 * (2.0 / eta - 1.0);
            assert!(optimal_gain_raw(thr, eta).abs() < 1e-10);
            assert!((optimal_gain_raw(ins, eta) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn no_threshold_without_bath_at_zero_squeeze() {
        // r = 0, n_m = 0, gamma/kappa -> 0: eta = 2 and the threshold is negative
        let eta: f64 = 1.0 / 0.5;
        assert!((eta - 2.0).abs() < 1e-15);
        let thr = 4.0 * (1.0 / eta - 1.0);
        assert!((thr + 2.0).abs() < 1e-12);
    }

    #[test]
    fn c_tilde_arithmetic() {
        let c = 5e4;
        let tanh_r: f64 = 0.4;
        assert!((c * (1.0 - tanh_r.powi(2)) - 4.2e4).abs() < 1e-9);
    }
}
