//! Covariance dynamics under time-periodic drift matrices.
//!
//! Propagates the 4x4 covariance matrix of the quadrature fluctuations
//! `V' = M(t) V + V M(t)^T + D` on its 10 independent entries, with
//! constructors for the lab-frame drift (built on an interpolated mean-field
//! orbit) and the rotating-frame drift with counter-rotating terms retained.
//! The periodic steady state is reached by settling and checked by Floquet
//! (monodromy) multipliers.

use std::sync::Arc;

use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::meanfield::{EffectiveCoupling, MeanFieldOrbit};
use crate::ode::{Integrator, OdeOptions};
use crate::params::PhysicalParams;

/// Reference frame of a drift matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lab,
    RotatingRwa,
    RotatingCrt,
}

enum Evaluator {
    Constant(Matrix4<f64>),
    Periodic(Arc<dyn Fn(f64) -> Matrix4<f64> + Send + Sync>),
}

/// A drift matrix `M(t)`, constant or tau-periodic.
pub struct DriftMatrix {
    eval: Evaluator,
    pub frame: Frame,
    /// `None` for constant matrices.
    pub period: Option<f64>,
}

impl DriftMatrix {
    pub fn constant(m: Matrix4<f64>, frame: Frame) -> Self {
        DriftMatrix { eval: Evaluator::Constant(m), frame, period: None }
    }

    pub fn periodic(
        f: impl Fn(f64) -> Matrix4<f64> + Send + Sync + 'static,
        period: f64,
        frame: Frame,
    ) -> Self {
        DriftMatrix { eval: Evaluator::Periodic(Arc::new(f)), frame, period: Some(period) }
    }

    pub fn at(&self, t: f64) -> Matrix4<f64> {
        match &self.eval {
            Evaluator::Constant(m) => *m,
            Evaluator::Periodic(f) => f(t),
        }
    }

    pub fn as_constant(&self) -> Option<Matrix4<f64>> {
        match &self.eval {
            Evaluator::Constant(m) => Some(*m),
            Evaluator::Periodic(_) => None,
        }
    }

    /// Max entrywise deviation `|M(t + tau) - M(t)|` sampled on a grid,
    /// relative to the largest entry. Zero for constant matrices.
    pub fn periodicity_defect(&self, n_samples: usize) -> f64 {
        let Some(tau) = self.period else { return 0.0 };
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n_samples {
            let t = i as f64 * tau / n_samples as f64;
            let d = self.at(t + tau) - self.at(t);
            worst = worst.max(d.abs().max());
            scale = scale.max(self.at(t).abs().max());
        }
        worst / scale.max(1e-300)
    }

    /// Time average over one period (trapezoid on a uniform grid).
    pub fn time_average(&self, n_samples: usize) -> Matrix4<f64> {
        match &self.eval {
            Evaluator::Constant(m) => *m,
            Evaluator::Periodic(f) => {
                let tau = self.period.unwrap();
                let mut acc = Matrix4::zeros();
                for i in 0..n_samples {
                    acc += f(i as f64 * tau / n_samples as f64);
                }
                acc / n_samples as f64
            }
        }
    }
}

/// Diagonal input-noise matrix `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDiffusion(pub Matrix4<f64>);

impl NoiseDiffusion {
    /// Lab-frame form: position noiseless,
    /// `D = diag[0, gamma_m (2 n_m + 1), kappa (2 n_a + 1), kappa (2 n_a + 1)]`.
    pub fn lab(params: &PhysicalParams) -> Self {
        NoiseDiffusion(Matrix4::from_diagonal(&nalgebra::Vector4::new(
            0.0,
            params.gamma_m * (2.0 * params.n_m + 1.0),
            params.kappa * (2.0 * params.n_a + 1.0),
            params.kappa * (2.0 * params.n_a + 1.0),
        )))
    }

    /// Rotating-frame form: the mechanical noise is isotropic over the tilded
    /// quadratures, `gamma_m (2 n_m + 1) / 2` on each.
    pub fn rotating(params: &PhysicalParams) -> Self {
        NoiseDiffusion(Matrix4::from_diagonal(&nalgebra::Vector4::new(
            params.gamma_m * (2.0 * params.n_m + 1.0) / 2.0,
            params.gamma_m * (2.0 * params.n_m + 1.0) / 2.0,
            params.kappa * (2.0 * params.n_a + 1.0),
            params.kappa * (2.0 * params.n_a + 1.0),
        )))
    }
}

/// Real symmetric 4x4 covariance matrix over `(dq, dp, dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(pub Matrix4<f64>);

impl CovarianceMatrix {
    /// Thermal state `diag[n_m + 1/2, n_m + 1/2, n_a + 1/2, n_a + 1/2]`.
    pub fn thermal(n_m: f64, n_a: f64) -> Self {
        CovarianceMatrix(Matrix4::from_diagonal(&nalgebra::Vector4::new(
            n_m + 0.5,
            n_m + 0.5,
            n_a + 0.5,
            n_a + 0.5,
        )))
    }

    pub fn vacuum() -> Self {
        CovarianceMatrix::thermal(0.0, 0.0)
    }

    pub fn var_q(&self) -> f64 {
        self.0[(0, 0)]
    }

    pub fn var_p(&self) -> f64 {
        self.0[(1, 1)]
    }

    /// Deviation from symmetry relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.0.abs().max().max(1e-300);
        ((self.0 - self.0.transpose()).abs().max()) / scale
    }

    /// Smallest eigenvalue of `V + i sigma / 2` with `sigma` the two-mode
    /// symplectic form; nonnegative (to tolerance) for physical states.
    pub fn uncertainty_eigenvalue(&self) -> f64 {
        let mut h = Matrix4::<Complex64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                h[(i, j)] = Complex64::new(self.0[(i, j)], 0.5 * SYMPLECTIC[i][j]);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Physicality check: symmetric, nonnegative diagonal, uncertainty bound.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.asymmetry() < 1e-10
            && (0..4).all(|i| self.0[(i, i)] >= -tol)
            && self.uncertainty_eigenvalue() >= -tol
    }
}

const SYMPLECTIC: [[f64; 4]; 4] = [
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
];

/// Squeezing degree in dB relative to the vacuum variance 1/2.
pub fn squeezing_db(variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {variance}")));
    }
    Ok(-10.0 * (variance / 0.5).log10())
}

/// Lab-frame drift matrix evaluated on the interpolated orbit:
/// `Delta(t) = Delta_0 - g <q(t)>`, `G(t) = g <a(t)> / sqrt 2`,
/// `theta_bar = 2 Delta_p t - theta`.
pub fn lab_drift(params: &PhysicalParams, orbit: &MeanFieldOrbit) -> DriftMatrix {
    let p = params.clone();
    let orbit = orbit.clone();
    let tau = orbit.period;
    DriftMatrix::periodic(
        move |t| {
            let s = orbit.interpolate(t);
            lab_drift_at(&p, s.q_mean, s.a_mean, t)
        },
        tau,
        Frame::Lab,
    )
}

fn lab_drift_at(params: &PhysicalParams, q_mean: f64, a_mean: Complex64, t: f64) -> Matrix4<f64> {
    let g_eff = params.g * a_mean / 2f64.sqrt();
    let (gx, gy) = (g_eff.re, g_eff.im);
    let delta = params.delta0 - params.g * q_mean;
    let theta_bar = 2.0 * params.delta_p * t - params.theta;
    let (sin_tb, cos_tb) = theta_bar.sin_cos();
    let two_lam = 2.0 * params.lambda_gain;
    Matrix4::new(
        0.0, params.omega_m, 0.0, 0.0,
        -params.omega_m, -params.gamma_m, 2.0 * gx, 2.0 * gy,
        -2.0 * gy, 0.0, -params.kappa + two_lam * cos_tb, delta - two_lam * sin_tb,
        2.0 * gx, 0.0, -delta - two_lam * sin_tb, -params.kappa - two_lam * cos_tb,
    )
}

/// Quadrature block of `dc/dt = z1 d + z2 d^dag` acting on `(u_d, v_d)`.
fn quad_block(z1: Complex64, z2: Complex64) -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(
        (z1 + z2).re,
        (-z1 + z2).im,
        (z1 + z2).im,
        (z1 - z2).re,
    )
}

/// Rotating-frame drift with the counter-rotating terms retained.
///
/// Frame assumptions: `Omega = 2 omega_m` and effective detuning at the
/// mechanical frequency. The time average over one period is the constant
/// RWA matrix.
pub fn rotating_crt_drift(coupling: &EffectiveCoupling, params: &PhysicalParams) -> Result<DriftMatrix> {
    if (params.omega_mod - 2.0 * params.omega_m).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "rotating frame requires Omega = 2 omega_m, got Omega = {}",
            params.omega_mod
        )));
    }
    if (params.delta0 - params.omega_m).abs() > 0.5 * params.omega_m {
        return Err(Error::Config(format!(
            "rotating frame assumes a detuning near omega_m, got Delta_0 = {}",
            params.delta0
        )));
    }
    let om = params.omega_mod;
    let tau = params.period();
    let (g0, g1, gm1) = (coupling.g0, coupling.g1, coupling.g_minus1);
    let kappa = params.kappa;
    let gamma = params.gamma_m;
    let two_lam = 2.0 * params.lambda_gain * Complex64::new(0.0, params.theta).exp();
    let i = Complex64::I;
    Ok(DriftMatrix::periodic(
        move |t| {
            let e1 = Complex64::new(0.0, om * t).exp();
            let em1 = e1.conj();
            let e2 = e1 * e1;
            // cavity equation
            let z_ab = i * (g0 + g1 * em1 + gm1 * e1);
            let w_ab = i * (g1 + g0 * e1 + gm1 * e2);
            let z_a = Complex64::new(-kappa, 0.0);
            let w_a = two_lam;
            // mechanical equation
            let z_ba = i * (g0.conj() + g1.conj() * e1 + gm1.conj() * em1);
            let w_ba = i * (g1 + g0 * e1 + gm1 * e2);
            let z_b = Complex64::new(-gamma / 2.0, 0.0);
            let w_b = gamma / 2.0 * e1;
            let mut m = Matrix4::zeros();
            m.view_mut((0, 0), (2, 2)).copy_from(&quad_block(z_b, w_b));
            m.view_mut((0, 2), (2, 2)).copy_from(&quad_block(z_ba, w_ba));
            m.view_mut((2, 0), (2, 2)).copy_from(&quad_block(z_ab, w_ab));
            m.view_mut((2, 2), (2, 2)).copy_from(&quad_block(z_a, w_a));
            m
        },
        tau,
        Frame::RotatingCrt,
    ))
}

// packing of symmetric 4x4 matrices into 10-vectors
const PACK: [(usize, usize); 10] = [
    (0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3),
];

fn pack(v: &Matrix4<f64>) -> SVector<f64, 10> {
    SVector::from_fn(|k, _| v[PACK[k]])
}

fn unpack(x: &SVector<f64, 10>) -> Matrix4<f64> {
    let mut v = Matrix4::zeros();
    for (k, &(i, j)) in PACK.iter().enumerate() {
        v[(i, j)] = x[k];
        v[(j, i)] = x[k];
    }
    v
}

fn covariance_rhs(m: &Matrix4<f64>, d: &Matrix4<f64>, x: &SVector<f64, 10>) -> SVector<f64, 10> {
    let v = unpack(x);
    let mv = m * v;
    let rhs = mv + mv.transpose() + d;
    pack(&rhs)
}

/// A covariance trajectory sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct CovarianceTrajectory {
    pub times: Vec<f64>,
    pub covariances: Vec<CovarianceMatrix>,
}

impl CovarianceTrajectory {
    pub fn min_var_p(&self) -> f64 {
        self.covariances.iter().map(|v| v.var_p()).fold(f64::INFINITY, f64::min)
    }
}

/// Propagates `V' = M V + V M^T + D` from `v0` to `t_end`, sampling
/// `n_samples` points uniformly; symmetry is exact by construction
/// (only the upper triangle is integrated).
pub fn evolve_covariance(
    drift: &DriftMatrix,
    noise: &NoiseDiffusion,
    v0: &CovarianceMatrix,
    t_end: f64,
    n_samples: usize,
    opts: OdeOptions,
) -> Result<CovarianceTrajectory> {
    if !v0.is_physical(1e-8) {
        return Err(Error::Domain("initial covariance is not a physical state".into()));
    }
    let d = noise.0;
    let mut integ = Integrator::new(
        |t, x: &SVector<f64, 10>| covariance_rhs(&drift.at(t), &d, x),
        0.0,
        pack(&v0.0),
        opts,
    );
    let samples = integ.sample_uniform(t_end, n_samples.max(1))?;
    let mut times = Vec::with_capacity(samples.len() + 1);
    let mut covariances = Vec::with_capacity(samples.len() + 1);
    for (t, x) in samples {
        times.push(t);
        covariances.push(CovarianceMatrix(unpack(&x)));
    }
    times.push(integ.t);
    covariances.push(CovarianceMatrix(unpack(&integ.y)));
    Ok(CovarianceTrajectory { times, covariances })
}

/// Monodromy matrix: fundamental solution of `Phi' = M(t) Phi` over one period.
pub fn monodromy(drift: &DriftMatrix, opts: OdeOptions) -> Result<Matrix4<f64>> {
    let tau = drift.period.unwrap_or(1.0);
    let y = crate::ode::integrate(
        |t, x: &SVector<f64, 16>| {
            let phi = SMatrix::<f64, 4, 4>::from_column_slice(x.as_slice());
            let d = drift.at(t) * phi;
            SVector::<f64, 16>::from_column_slice(d.as_slice())
        },
        0.0,
        SVector::<f64, 16>::from_column_slice(Matrix4::identity().as_slice()),
        tau,
        opts,
    )?;
    Ok(Matrix4::from_column_slice(y.as_slice()))
}

/// Floquet multiplier moduli, sorted descending.
pub fn floquet_multipliers(drift: &DriftMatrix, opts: OdeOptions) -> Result<Vec<f64>> {
    let phi = monodromy(drift, opts)?;
    let mut mags: Vec<f64> = phi.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(mags)
}

/// Controls for the periodic-steady-state search.
#[derive(Debug, Clone, Copy)]
pub struct FloquetOptions {
    pub settle_periods: usize,
    /// Grid points per period in the returned trajectory.
    pub sample_points: usize,
    /// Acceptance tolerance on `max |V(t+tau) - V(t)| / ||V||`.
    pub tol: f64,
    pub max_extensions: usize,
    pub extension_periods: usize,
    pub ode: OdeOptions,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        FloquetOptions {
            settle_periods: 300,
            sample_points: 256,
            tol: 1e-5,
            max_extensions: 3,
            extension_periods: 100,
            ode: OdeOptions { rtol: 1e-9, atol: 1e-11, ..OdeOptions::default() },
        }
    }
}

/// Variances and squeezing metrics of a steady (periodic or constant) state.
#[derive(Debug, Clone)]
pub struct SqueezingReport {
    pub var_q: f64,
    pub var_p: f64,
    pub var_q_max: f64,
    pub var_p_max: f64,
    pub db_q: f64,
    pub db_p: f64,
    pub stable: bool,
    pub method: String,
    /// Labelled diagnostics (periodicity residuals, route discrepancies, ...).
    pub residuals: Vec<(String, f64)>,
}

impl SqueezingReport {
    pub fn from_variances(var_q: f64, var_p: f64, method: &str) -> Result<Self> {
        Ok(SqueezingReport {
            var_q,
            var_p,
            var_q_max: var_q,
            var_p_max: var_p,
            db_q: squeezing_db(var_q)?,
            db_p: squeezing_db(var_p)?,
            stable: true,
            method: method.to_string(),
            residuals: Vec::new(),
        })
    }
}

/// Interpolates the minimum of a sampled periodic curve with a parabola
/// through the discrete minimum and its neighbours.
fn refine_periodic_min(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ys.len();
    let (k, _) = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ym = ys[(k + n - 1) % n];
    let y0 = ys[k];
    let yp = ys[(k + 1) % n];
    let denom = ym - 2.0 * y0 + yp;
    if denom <= 0.0 {
        return y0;
    }
    let _ = ts;
    y0 - (ym - yp) * (ym - yp) / (8.0 * denom)
}

/// Settles the covariance onto the tau-periodic attractor and reports one
/// period together with the squeezing metrics of the mechanical quadratures.
///
/// Stability is checked first through the Floquet multipliers of the
/// homogeneous part; settling is extended until successive periods agree.
pub fn periodic_steady_covariance(
    drift: &DriftMatrix,
    noise: &NoiseDiffusion,
    v0: &CovarianceMatrix,
    opts: &FloquetOptions,
) -> Result<(CovarianceTrajectory, SqueezingReport)> {
    let tau = drift.period.ok_or_else(|| {
        Error::Config("periodic steady state requires a periodic drift".into())
    })?;
    let mults = floquet_multipliers(drift, opts.ode)?;
    if mults[0] >= 1.0 {
        return Err(Error::FloquetUnstable(mults));
    }

    let d = noise.0;
    let n = opts.sample_points;
    let mut integ = Integrator::new(
        |t, x: &SVector<f64, 10>| covariance_rhs(&drift.at(t), &d, x),
        0.0,
        pack(&v0.0),
        opts.ode,
    );
    let mut k = opts.settle_periods;
    integ.integrate_to(k as f64 * tau)?;
    let mut prev = integ.sample_uniform((k + 1) as f64 * tau, n)?;
    k += 1;
    let mut extensions = 0;
    let residual = loop {
        let next = integ.sample_uniform((k + 1) as f64 * tau, n)?;
        k += 1;
        let scale = prev
            .iter()
            .map(|(_, x)| x.amax())
            .fold(0.0, f64::max)
            .max(1e-300);
        let resid = prev
            .iter()
            .zip(&next)
            .map(|((_, a), (_, b))| (a - b).amax())
            .fold(0.0, f64::max)
            / scale;
        prev = next;
        if resid <= opts.tol {
            break resid;
        }
        if extensions >= opts.max_extensions {
            return Err(Error::NonConvergence(format!(
                "covariance periodicity residual {resid:.3e} > {:.1e} after {k} periods",
                opts.tol
            )));
        }
        extensions += 1;
        integ.integrate_to((k + opts.extension_periods) as f64 * tau)?;
        k += opts.extension_periods;
        prev = integ.sample_uniform((k + 1) as f64 * tau, n)?;
        k += 1;
    };

    let t0 = prev[0].0;
    let times: Vec<f64> = prev.iter().map(|(t, _)| t - t0).collect();
    let covariances: Vec<CovarianceMatrix> =
        prev.iter().map(|(_, x)| CovarianceMatrix(unpack(x))).collect();
    let vqs: Vec<f64> = covariances.iter().map(|v| v.var_q()).collect();
    let vps: Vec<f64> = covariances.iter().map(|v| v.var_p()).collect();
    let var_q = refine_periodic_min(&times, &vqs);
    let var_p = refine_periodic_min(&times, &vps);
    let report = SqueezingReport {
        var_q,
        var_p,
        var_q_max: vqs.iter().fold(0.0f64, |m, &v| m.max(v)),
        var_p_max: vps.iter().fold(0.0f64, |m, &v| m.max(v)),
        db_q: squeezing_db(var_q)?,
        db_p: squeezing_db(var_p)?,
        stable: true,
        method: "floquet".to_string(),
        residuals: vec![
            ("periodicity".to_string(), residual),
            ("max_floquet_multiplier".to_string(), mults[0]),
        ],
    };
    Ok((CovarianceTrajectory { times, covariances }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{detect_periodic_orbit, OrbitOptions};
    use approx::assert_relative_eq;

    fn zero_orbit(tau: f64) -> MeanFieldOrbit {
        MeanFieldOrbit {
            period: tau,
            samples: (0..64)
                .map(|i| crate::meanfield::MeanFieldState {
                    t: i as f64 * tau / 64.0,
                    ..crate::meanfield::MeanFieldState::zero()
                })
                .collect(),
            periodicity_residual: 0.0,
            settled_periods: 0,
        }
    }

    #[test]
    fn lab_drift_zero_orbit_blocks() {
        let p = PhysicalParams::new(0.1, 1e-6, 1.06, 4e-6);
        let drift = lab_drift(&p, &zero_orbit(p.period()));
        let m = drift.at(0.3);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], -1.0);
        assert_eq!(m[(1, 1)], -1e-6);
        assert_eq!(m[(1, 2)], 0.0);
        assert_eq!(m[(2, 2)], -0.1);
        assert_eq!(m[(2, 3)], 1.06);
        assert_eq!(m[(3, 2)], -1.06);
    }

    #[test]
    fn lab_drift_invariant_under_theta_shift() {
        let mut p = PhysicalParams::figure1();
        let orbit = zero_orbit(p.period());
        let m1 = lab_drift(&p, &orbit).at(0.7);
        p.theta += 2.0 * std::f64::consts::PI;
        let m2 = lab_drift(&p, &orbit).at(0.7);
        assert!((m1 - m2).abs().max() < 1e-12);
    }

    #[test]
    fn lab_drift_is_periodic_on_converged_orbit() {
        let p = PhysicalParams::figure1();
        let opts = OrbitOptions { settle_periods: 300, ..OrbitOptions::default() };
        let orbit = detect_periodic_orbit(&p, &opts).unwrap();
        let drift = lab_drift(&p, &orbit);
        assert!(drift.periodicity_defect(97) < 1e-8);
    }

    #[test]
    fn crt_time_average_is_rwa_matrix() {
        let p = {
            let mut p = PhysicalParams::new(0.1, 1e-6, 1.0, 4e-6);
            p.lambda_gain = 0.2 * p.kappa;
            p.theta = 1.3;
            p
        };
        let cpl = EffectiveCoupling::new(
            Complex64::new(0.002, 0.001),
            Complex64::new(0.01, -0.03),
            Complex64::new(-0.004, 0.009),
        );
        let crt = rotating_crt_drift(&cpl, &p).unwrap();
        let rwa = crate::rwa::build_tilde_drift(&cpl, &p);
        // the oscillating terms are pure harmonics; a uniform grid averages
        // them to zero exactly up to roundoff
        let avg = crt.time_average(1024);
        assert!((avg - rwa.as_constant().unwrap()).abs().max() < 1e-10);
    }

    #[test]
    fn crt_requires_matched_modulation_frequency() {
        let mut p = PhysicalParams::new(0.1, 1e-6, 1.0, 4e-6);
        p.omega_mod = 1.7;
        let cpl = EffectiveCoupling::from_ratios(0.5, 0.0, 1e4, p.kappa, p.gamma_m);
        assert!(matches!(rotating_crt_drift(&cpl, &p), Err(Error::Config(_))));
    }

    #[test]
    fn decoupled_thermalization() {
        let mut p = PhysicalParams::new(0.2, 1e-2, 0.9, 0.0);
        p.n_m = 3.0;
        p.n_a = 0.5;
        let drift = lab_drift(&p, &zero_orbit(p.period()));
        let noise = NoiseDiffusion::lab(&p);
        let traj = evolve_covariance(
            &drift,
            &noise,
            &CovarianceMatrix::vacuum(),
            4000.0,
            32,
            OdeOptions::default(),
        )
        .unwrap();
        let v = traj.covariances.last().unwrap();
        assert_relative_eq!(v.var_q(), 3.5, max_relative = 1e-4);
        assert_relative_eq!(v.var_p(), 3.5, max_relative = 1e-4);
        assert_relative_eq!(v.0[(2, 2)], 1.0, max_relative = 1e-6);
        assert_relative_eq!(v.0[(3, 3)], 1.0, max_relative = 1e-6);
        assert!(v.is_physical(1e-8));
    }

    #[test]
    fn steady_initial_state_stays_constant() {
        let mut p = PhysicalParams::new(0.15, 2e-3, 1.0, 0.0);
        p.n_m = 10.0;
        let m = crate::rwa::build_tilde_drift(
            &EffectiveCoupling::from_ratios(0.4, 0.0, 2e3, p.kappa, p.gamma_m),
            &p,
        );
        let noise = NoiseDiffusion::rotating(&p);
        let v0 = crate::rwa::steady_lyapunov(&m.as_constant().unwrap(), &noise).unwrap();
        let traj = evolve_covariance(&m, &noise, &v0, 500.0, 8, OdeOptions::default()).unwrap();
        for v in &traj.covariances {
            assert!((v.0 - v0.0).abs().max() < 1e-6 * v0.0.abs().max());
        }
    }

    #[test]
    fn squeezing_db_reference_points() {
        assert_eq!(squeezing_db(0.5).unwrap(), 0.0);
        assert_relative_eq!(squeezing_db(0.117).unwrap(), 6.31, epsilon = 5e-3);
        assert_relative_eq!(squeezing_db(0.25).unwrap(), 3.0103, epsilon = 1e-4);
        assert!(squeezing_db(0.0).is_err());
        assert!(squeezing_db(-1.0).is_err());
    }

    #[test]
    fn monodromy_of_constant_drift_matches_exponential() {
        let p = PhysicalParams::new(0.1, 1e-3, 1.0, 0.0);
        let cpl = EffectiveCoupling::from_ratios(0.3, 0.0, 1e3, p.kappa, p.gamma_m);
        let m = crate::rwa::build_tilde_drift(&cpl, &p).as_constant().unwrap();
        let drift = DriftMatrix::periodic(move |_| m, p.period(), Frame::RotatingRwa);
        let mults = floquet_multipliers(&drift, OdeOptions::default()).unwrap();
        let mut expect: Vec<f64> = m
            .complex_eigenvalues()
            .iter()
            .map(|l| (l * Complex64::new(p.period(), 0.0)).exp().norm())
            .collect();
        expect.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in mults.iter().zip(&expect) {
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }
    }

    #[test]
    fn unstable_drift_reports_multipliers() {
        let mut p = PhysicalParams::new(0.1, 1e-6, 1.0, 0.0);
        p.lambda_gain = 0.6 * p.kappa; // lambda_bar = 1.2
        let cpl = EffectiveCoupling::new(
            Complex64::ZERO,
            Complex64::new(1e-4, 0.0),
            Complex64::ZERO,
        );
        p.theta = std::f64::consts::PI;
        let drift = rotating_crt_drift(&cpl, &p).unwrap();
        match periodic_steady_covariance(
            &drift,
            &NoiseDiffusion::rotating(&p),
            &CovarianceMatrix::vacuum(),
            &FloquetOptions::default(),
        ) {
            Err(Error::FloquetUnstable(mags)) => assert!(mags[0] >= 1.0),
            other => panic!("expected Floquet instability, got {:?}", other.map(|_| ())),
        }
    }
}
