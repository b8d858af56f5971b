//! Semiclassical first-moment dynamics.
//!
//! Integrates the mean-field equations for `<q>, <p>, <a>`, detects the
//! asymptotic tau-periodic orbit by Poincare sampling, evaluates the
//! perturbative Fourier recursion for the orbit coefficients, and extracts
//! the effective sideband couplings `g_{-1}, g_0, g_1` by either route.

use nalgebra::Vector4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::{Integrator, OdeOptions};
use crate::params::PhysicalParams;

/// First moments at one instant. Times are in units of `1/omega_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    pub t: f64,
    pub q_mean: f64,
    pub p_mean: f64,
    pub a_mean: Complex64,
}

impl MeanFieldState {
    pub fn zero() -> Self {
        MeanFieldState { t: 0.0, q_mean: 0.0, p_mean: 0.0, a_mean: Complex64::ZERO }
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.q_mean, self.p_mean, self.a_mean.re, self.a_mean.im)
    }

    fn from_vector(t: f64, v: &Vector4<f64>) -> Self {
        MeanFieldState { t, q_mean: v[0], p_mean: v[1], a_mean: Complex64::new(v[2], v[3]) }
    }

    pub fn norm(&self) -> f64 {
        (self.q_mean * self.q_mean + self.p_mean * self.p_mean + self.a_mean.norm_sqr()).sqrt()
    }
}

/// One period of the converged asymptotic orbit on a uniform grid.
///
/// Sample times are reduced to `[0, tau)` and are drive-phase aligned: the
/// stored state at phase `s` is the asymptotic state at `k tau + s`.
#[derive(Debug, Clone)]
pub struct MeanFieldOrbit {
    pub period: f64,
    pub samples: Vec<MeanFieldState>,
    /// Max over the grid of `|state(t + tau) - state(t)|` relative to the
    /// orbit amplitude (absolute for the zero orbit).
    pub periodicity_residual: f64,
    /// Total settling time used, in periods.
    pub settled_periods: usize,
}

impl MeanFieldOrbit {
    /// Largest state norm on the grid.
    pub fn amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Periodic cubic (Catmull-Rom) interpolation of the state at phase
    /// `t mod tau`.
    pub fn interpolate(&self, t: f64) -> MeanFieldState {
        let n = self.samples.len();
        let tau = self.period;
        let s = (t.rem_euclid(tau)) / tau * n as f64;
        let i1 = s.floor() as usize % n;
        let x = s - s.floor();
        let i0 = (i1 + n - 1) % n;
        let i2 = (i1 + 1) % n;
        let i3 = (i1 + 2) % n;
        let pick = |i: usize| self.samples[i].to_vector();
        let (p0, p1, p2, p3) = (pick(i0), pick(i1), pick(i2), pick(i3));
        let m1 = (p2 - p0) * 0.5;
        let m2 = (p3 - p1) * 0.5;
        let x2 = x * x;
        let x3 = x2 * x;
        let v = p1 * (2.0 * x3 - 3.0 * x2 + 1.0)
            + m1 * (x3 - 2.0 * x2 + x)
            + p2 * (-2.0 * x3 + 3.0 * x2)
            + m2 * (x3 - x2);
        MeanFieldState::from_vector(t, &v)
    }
}

fn mean_field_rhs(params: &PhysicalParams, t: f64, y: &Vector4<f64>) -> Vector4<f64> {
    let a = Complex64::new(y[2], y[3]);
    let e = params.drive_field(t);
    let opa = 2.0 * params.lambda_gain
        * Complex64::new(0.0, params.theta).exp()
        * a.conj()
        * Complex64::new(0.0, -2.0 * params.delta_p * t).exp();
    let adot = -(Complex64::new(params.kappa, params.delta0)) * a
        + Complex64::new(0.0, params.g) * a * y[0]
        + e
        + opa;
    Vector4::new(
        params.omega_m * y[1],
        -params.omega_m * y[0] - params.gamma_m * y[1] + params.g * a.norm_sqr(),
        adot.re,
        adot.im,
    )
}

/// Integrates the mean-field equations from `initial` to `t_end`, returning
/// `n_samples` uniformly spaced states (the endpoint excluded).
pub fn integrate_mean_field(
    params: &PhysicalParams,
    initial: MeanFieldState,
    t_end: f64,
    n_samples: usize,
    opts: OdeOptions,
) -> Result<Vec<MeanFieldState>> {
    params.validate()?;
    if !(t_end > initial.t) {
        return Err(Error::Validation {
            field: "t_end",
            message: format!("must exceed the initial time {}", initial.t),
        });
    }
    let mut integ = Integrator::new(
        |t, y: &Vector4<f64>| mean_field_rhs(params, t, y),
        initial.t,
        initial.to_vector(),
        opts,
    );
    let samples = integ.sample_uniform(t_end, n_samples.max(1))?;
    Ok(samples
        .into_iter()
        .map(|(t, v)| MeanFieldState::from_vector(t, &v))
        .collect())
}

/// Settling and acceptance controls for orbit detection.
#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub settle_periods: usize,
    /// Grid points per period in the stored orbit.
    pub sample_points: usize,
    /// Acceptance tolerance on the periodicity residual.
    pub tol: f64,
    pub max_extensions: usize,
    pub extension_periods: usize,
    pub ode: OdeOptions,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            settle_periods: 200,
            sample_points: 256,
            tol: 1e-6,
            max_extensions: 3,
            extension_periods: 100,
            ode: OdeOptions { rtol: 1e-9, atol: 1e-12, ..OdeOptions::default() },
        }
    }
}

/// Integrates from the zero state until successive period samples agree,
/// then returns one period of the asymptotic orbit.
pub fn detect_periodic_orbit(params: &PhysicalParams, opts: &OrbitOptions) -> Result<MeanFieldOrbit> {
    params.validate()?;
    if opts.settle_periods < 1 {
        return Err(Error::Validation {
            field: "settle_periods",
            message: "must be at least 1".into(),
        });
    }
    let tau = params.period();
    let n = opts.sample_points;

    if params.drive.values().all(|e| e.norm() == 0.0) {
        // the origin is the exact fixed point; it is an attractor iff the
        // parametric gain is below threshold
        if params.lambda_bar() >= 1.0 {
            return Err(Error::Instability {
                time: 0.0,
                message: format!(
                    "zero-drive cavity has eigenvalue -kappa + 2 Lambda = {:+.3e} >= 0",
                    -params.kappa + 2.0 * params.lambda_gain
                ),
            });
        }
        let samples = (0..n)
            .map(|i| MeanFieldState { t: i as f64 * tau / n as f64, ..MeanFieldState::zero() })
            .collect();
        return Ok(MeanFieldOrbit {
            period: tau,
            samples,
            periodicity_residual: 0.0,
            settled_periods: 0,
        });
    }

    let mut integ = Integrator::new(
        |t, y: &Vector4<f64>| mean_field_rhs(params, t, y),
        0.0,
        Vector4::zeros(),
        opts.ode,
    );
    // k counts completed periods; each sampled window spans [k tau, (k+1) tau)
    let mut k = opts.settle_periods;
    integ.integrate_to(k as f64 * tau)?;
    let mut prev = integ.sample_uniform((k + 1) as f64 * tau, n)?;
    k += 1;
    let mut extensions = 0;
    loop {
        let next = integ.sample_uniform((k + 1) as f64 * tau, n)?;
        k += 1;
        let amp = prev.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        let resid_abs = prev
            .iter()
            .zip(&next)
            .map(|((_, a), (_, b))| (a - b).norm())
            .fold(0.0, f64::max);
        let residual = if amp > 0.0 { resid_abs / amp } else { resid_abs };
        if residual <= opts.tol {
            let t0 = next[0].0;
            let samples = next
                .iter()
                .map(|(t, v)| MeanFieldState::from_vector(t - t0, v))
                .collect();
            return Ok(MeanFieldOrbit {
                period: tau,
                samples,
                periodicity_residual: residual,
                settled_periods: k,
            });
        }
        if extensions >= opts.max_extensions {
            return Err(Error::NonConvergence(format!(
                "orbit residual {residual:.3e} > {:.1e} after {k} periods and {extensions} extensions",
                opts.tol,
            )));
        }
        extensions += 1;
        integ.integrate_to((k + opts.extension_periods) as f64 * tau)?;
        k += opts.extension_periods;
        prev = integ.sample_uniform((k + 1) as f64 * tau, n)?;
        k += 1;
    }
}

/// Which observable a coefficient table refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Q,
    P,
    A,
}

/// Tables `O_{n,j}` of the perturbative Fourier expansion
/// `<O(t)> = sum_{n,j} O_{n,j} e^(i n Omega t) g^j`.
///
/// The stored coefficients are independent of the coupling `g`; only the
/// resummation weights `g^j` carry it.
#[derive(Debug, Clone)]
pub struct FourierCoefficients {
    pub n_max: i32,
    pub j_max: usize,
    a: Vec<Complex64>,
    q: Vec<Complex64>,
    p: Vec<Complex64>,
}

impl FourierCoefficients {
    fn idx(&self, n: i32, j: usize) -> usize {
        debug_assert!(n.abs() <= self.n_max && j <= self.j_max);
        (n + self.n_max) as usize * (self.j_max + 1) + j
    }

    pub fn get(&self, obs: Observable, n: i32, j: usize) -> Complex64 {
        if n.abs() > self.n_max || j > self.j_max {
            return Complex64::ZERO;
        }
        let i = self.idx(n, j);
        match obs {
            Observable::Q => self.q[i],
            Observable::P => self.p[i],
            Observable::A => self.a[i],
        }
    }

    /// Resums the table for one observable at time `t` and coupling `g`.
    pub fn reconstruct(&self, obs: Observable, t: f64, g: f64, omega_mod: f64) -> Complex64 {
        let mut total = Complex64::ZERO;
        for n in -self.n_max..=self.n_max {
            let phase = Complex64::new(0.0, n as f64 * omega_mod * t).exp();
            let mut gj = 1.0;
            for j in 0..=self.j_max {
                total += self.get(obs, n, j) * phase * gj;
                gj *= g;
            }
        }
        total
    }

    /// Full state from the truncated expansion; `q` and `p` are real up to
    /// truncation noise, the imaginary parts are dropped.
    pub fn reconstruct_state(&self, t: f64, g: f64, omega_mod: f64) -> MeanFieldState {
        MeanFieldState {
            t,
            q_mean: self.reconstruct(Observable::Q, t, g, omega_mod).re,
            p_mean: self.reconstruct(Observable::P, t, g, omega_mod).re,
            a_mean: self.reconstruct(Observable::A, t, g, omega_mod),
        }
    }

    /// Largest imaginary part of the reconstructed `q`, `p` relative to the
    /// reconstruction magnitude, sampled over one period.
    pub fn reality_defect(&self, g: f64, omega_mod: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI / omega_mod;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..64 {
            let t = i as f64 * tau / 64.0;
            for obs in [Observable::Q, Observable::P] {
                let v = self.reconstruct(obs, t, g, omega_mod);
                worst = worst.max(v.im.abs());
                scale = scale.max(v.re.abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}

/// Evaluates the recursive Fourier/perturbation coefficients up to order
/// `j_max` and harmonic `n_max`.
///
/// The zeroth order solves the OPA-coupled pair `(a_n, a*_{-n-1})` in closed
/// form; higher orders solve the same pair structure with the accumulated
/// nonlinear sources. Requires `Delta_p = Omega/2`.
pub fn fourier_perturbation_coefficients(
    params: &PhysicalParams,
    j_max: usize,
    n_max: i32,
) -> Result<FourierCoefficients> {
    params.validate()?;
    if (params.delta_p - params.omega_mod / 2.0).abs() > 1e-12 * params.omega_mod {
        return Err(Error::Config(format!(
            "the expansion requires Delta_p = Omega/2, got Delta_p = {}",
            params.delta_p
        )));
    }
    if n_max < params.max_drive_harmonic() {
        return Err(Error::Validation {
            field: "n_max",
            message: format!(
                "must cover the drive support (max harmonic {})",
                params.max_drive_harmonic()
            ),
        });
    }
    let om = params.omega_mod;
    let kappa = params.kappa;
    let d0 = params.delta0;
    let two_lam = 2.0 * params.lambda_gain * Complex64::new(0.0, params.theta).exp();
    let lam2_4 = 4.0 * params.lambda_gain * params.lambda_gain;

    let stride = j_max + 1;
    let size = (2 * n_max + 1) as usize * stride;
    let mut a = vec![Complex64::ZERO; size];
    let mut q = vec![Complex64::ZERO; size];
    let mut p = vec![Complex64::ZERO; size];
    let at = |n: i32, j: usize| ((n + n_max) as usize) * stride + j;

    // optical response factors kappa + i(Delta_0 + n Omega) and the pair
    // denominator of the (n, -n-1) elimination
    let resp = |n: i32| Complex64::new(kappa, d0 + n as f64 * om);
    let pair_den = |n: i32| -> Result<Complex64> {
        let d = resp(-n - 1).conj() * resp(n) - lam2_4;
        if d.norm() < 1e-14 * (kappa * kappa).max(1.0) {
            return Err(Error::Singularity { harmonic: n });
        }
        Ok(d)
    };

    // zeroth order: p_{n,0} = q_{n,0} = 0, a_{n,0} from the drive
    for n in -n_max..=n_max {
        let num = resp(-n - 1).conj() * params.drive_amp(-n) + two_lam * params.drive_amp(n + 1).conj();
        a[at(n, 0)] = num / pair_den(n)?;
    }

    for j in 1..=j_max {
        // mechanical coefficients from the radiation-pressure convolution
        for n in -n_max..=n_max {
            let mut s = Complex64::ZERO;
            for k in 0..j {
                for m in -n_max..=n_max {
                    let nm = n + m;
                    if nm.abs() <= n_max {
                        s += a[at(m, k)].conj() * a[at(nm, j - 1 - k)];
                    }
                }
            }
            let nw = n as f64 * om;
            let den = Complex64::new(
                params.omega_m * params.omega_m - nw * nw,
                params.gamma_m * nw,
            );
            q[at(n, j)] = params.omega_m * s / den;
            p[at(n, j)] = Complex64::new(0.0, nw / params.omega_m) * q[at(n, j)];
        }
        // optical coefficients: source from the Kerr-like convolution, then
        // the OPA pair elimination
        let mut src = vec![Complex64::ZERO; (2 * n_max + 1) as usize];
        for n in -n_max..=n_max {
            let mut s = Complex64::ZERO;
            for k in 0..j {
                for m in -n_max..=n_max {
                    let nm = n - m;
                    if nm.abs() <= n_max {
                        s += a[at(m, k)] * q[at(nm, j - 1 - k)];
                    }
                }
            }
            src[(n + n_max) as usize] = Complex64::new(0.0, 1.0) * s;
        }
        for n in -n_max..=n_max {
            let partner = -n - 1;
            if partner.abs() <= n_max {
                let num = resp(partner).conj() * src[(n + n_max) as usize]
                    + two_lam * src[(partner + n_max) as usize].conj();
                a[at(n, j)] = num / pair_den(n)?;
            } else {
                // the partner harmonic is outside the truncation
                a[at(n, j)] = src[(n + n_max) as usize] / resp(n);
            }
        }
    }

    Ok(FourierCoefficients { n_max, j_max, a, q, p })
}

/// Effective sideband couplings of the linearized dynamics,
/// `G(t) = g_0 + g_1 e^(-i Omega t) + g_{-1} e^(i Omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCoupling {
    pub g_minus1: Complex64,
    pub g0: Complex64,
    pub g1: Complex64,
}

impl EffectiveCoupling {
    pub fn new(g_minus1: Complex64, g0: Complex64, g1: Complex64) -> Self {
        EffectiveCoupling { g_minus1, g0, g1 }
    }

    /// Resummation route: `g_n = (1/sqrt 2) sum_j a_{-n,j} g^(j+1)`.
    pub fn from_coefficients(coeffs: &FourierCoefficients, g: f64) -> Self {
        let sum = |n: i32| {
            let mut acc = Complex64::ZERO;
            let mut gj = g;
            for j in 0..=coeffs.j_max {
                acc += coeffs.get(Observable::A, -n, j) * gj;
                gj *= g;
            }
            acc / 2f64.sqrt()
        };
        EffectiveCoupling::new(sum(-1), sum(0), sum(1))
    }

    /// Numeric route: Fourier projection of `g <a(t)> / sqrt 2` onto
    /// `e^(-i n Omega t)` over the stored orbit grid.
    pub fn from_orbit(orbit: &MeanFieldOrbit, params: &PhysicalParams) -> Self {
        let n_pts = orbit.samples.len() as f64;
        let project = |n: i32| {
            let mut acc = Complex64::ZERO;
            for s in &orbit.samples {
                let w = Complex64::new(0.0, n as f64 * params.omega_mod * s.t).exp();
                acc += params.g * s.a_mean / 2f64.sqrt() * w;
            }
            acc / n_pts
        };
        EffectiveCoupling::new(project(-1), project(0), project(1))
    }

    /// Coupling set from magnitude ratios at the phase-matched working point
    /// (`phi_0 = 0`, `phi_1 = pi`), with `|g_0|` fixed by the cooperativity.
    pub fn from_ratios(
        ratio_g1_g0: f64,
        ratio_gm1_g1: f64,
        cooperativity: f64,
        kappa: f64,
        gamma_m: f64,
    ) -> Self {
        let g0 = (cooperativity * kappa * gamma_m / 4.0).sqrt();
        let g1 = ratio_g1_g0 * g0;
        let gm1 = ratio_gm1_g1 * g1;
        EffectiveCoupling::new(
            Complex64::new(gm1, 0.0),
            Complex64::new(g0, 0.0),
            Complex64::new(-g1, 0.0),
        )
    }

    pub fn phi0(&self) -> f64 {
        self.g0.arg()
    }

    pub fn phi1(&self) -> f64 {
        self.g1.arg()
    }

    /// Relative phase `phi_r = phi_1 - phi_0`.
    pub fn phi_r(&self) -> f64 {
        self.phi1() - self.phi0()
    }

    /// OPA matching phase `phi_{r,0} = theta - 2 phi_0`, reduced to (-pi, pi].
    pub fn phi_r0(&self, theta: f64) -> f64 {
        wrap_angle(theta - 2.0 * self.phi0())
    }

    /// OPA matching phase `phi_{r,1} = theta - 2 phi_1`, reduced to (-pi, pi].
    pub fn phi_r1(&self, theta: f64) -> f64 {
        wrap_angle(theta - 2.0 * self.phi1())
    }

    /// `r = artanh(|g_1|/|g_0|)`; infinite when `|g_1| >= |g_0|` (the
    /// unsqueezed regime).
    pub fn squeeze_parameter(&self) -> f64 {
        let rho = self.g1.norm() / self.g0.norm();
        if rho >= 1.0 {
            f64::INFINITY
        } else {
            rho.atanh()
        }
    }

    pub fn g_plus(&self) -> Complex64 {
        self.g0 + self.g1
    }

    pub fn g_minus(&self) -> Complex64 {
        self.g0 - self.g1
    }

    /// Bogoliubov coupling `g_B = sqrt(|g_0|^2 - |g_1|^2) e^(i phi_0)`.
    pub fn g_bogoliubov(&self) -> Complex64 {
        let mag2 = self.g0.norm_sqr() - self.g1.norm_sqr();
        Complex64::from_polar(mag2.max(0.0).sqrt(), self.phi0())
    }
}

pub(crate) fn wrap_angle(phi: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut w = phi.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// Both coupling routes plus their largest relative discrepancy.
#[derive(Debug, Clone, Copy)]
pub struct CouplingComparison {
    pub analytic: EffectiveCoupling,
    pub numeric: EffectiveCoupling,
    pub max_rel_discrepancy: f64,
}

pub fn coupling_paths(
    params: &PhysicalParams,
    orbit: &MeanFieldOrbit,
    coeffs: &FourierCoefficients,
) -> CouplingComparison {
    let analytic = EffectiveCoupling::from_coefficients(coeffs, params.g);
    let numeric = EffectiveCoupling::from_orbit(orbit, params);
    let scale = numeric.g0.norm().max(analytic.g0.norm());
    let pairs = [
        (analytic.g_minus1, numeric.g_minus1),
        (analytic.g0, numeric.g0),
        (analytic.g1, numeric.g1),
    ];
    let max_rel_discrepancy = pairs
        .iter()
        .map(|(x, y)| (x - y).norm() / scale)
        .fold(0.0, f64::max);
    CouplingComparison { analytic, numeric, max_rel_discrepancy }
}
