//! Certificate machinery for the convergence analysis.
//!
//! Per subsystem the error dynamics, rewritten in the nonsmooth coordinates
//! `epsilon = (phi1(e1), e2)` and then `xi = (eps1, eps2 / gamma)`, are driven
//! by the constant pair `A0 = [[0, 1], [0, 0]]`, `C0 = [1, 0]`. The quadratic
//! certificate `V_i = xi' P_i xi` comes from the 2x2 algebraic Lyapunov
//! equation `(A0 - L C0)' P + P (A0 - L C0) = -Q`, which this module solves in
//! closed form. On top of that sit: empirical estimation of the
//! interconnection bound constants, gain-feasibility verdicts (including the
//! minimal gamma by bisection) and decrease monitoring of V along simulated
//! trajectories.

use crate::observer::{ObserverGains, ObserverPlant};
use crate::sim::Trajectory;
use crate::sta::{phi1, MuPair};
use crate::system::InterconnectedSystem;
use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;

pub const ALE_RESIDUAL_TOL: f64 = 1e-10;

/// Quadratic certificate of one subsystem.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub l: (f64, f64),
    pub q: Matrix2<f64>,
    pub p: Matrix2<f64>,
    pub lambda_min_q: f64,
    pub lambda_max_p: f64,
    pub lambda_min_p: f64,
}

fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    (0.5 * (tr - disc), 0.5 * (tr + disc))
}

fn a_closed(l1: f64, l2: f64, gamma: f64) -> Matrix2<f64> {
    // A0 - Gamma L C0 with Gamma = diag(gamma, gamma^2).
    Matrix2::new(-gamma * l1, 1.0, -gamma * gamma * l2, 0.0)
}

/// Closed-form solution of `(A0 - L C0)' P + P (A0 - L C0) = -Q` for a
/// symmetric positive definite `Q`. Requires `l1 > 0, l2 > 0` (Hurwitz).
pub fn solve_ale_2x2(l1: f64, l2: f64, q: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::Infeasible(format!(
            "A0 - L C0 is not Hurwitz for (l1, l2) = ({l1}, {l2})"
        )));
    }
    if (q[(0, 1)] - q[(1, 0)]).abs() > 1e-12 * q.norm() {
        return Err(Error::Domain("Q must be symmetric".into()));
    }
    let (qmin, _) = sym_eigenvalues(q);
    if qmin <= 0.0 {
        return Err(Error::Domain("Q must be positive definite".into()));
    }
    // Unknowns (p11, p12, p22); the three independent entries of the ALE give
    //   -2 l1 p11 - 2 l2 p12 = -q11
    //   p11 - l1 p12 - l2 p22 = -q12
    //   2 p12 = -q22
    let p12 = -q[(1, 1)] / 2.0;
    let p11 = (q[(0, 0)] + l2 * q[(1, 1)]) / (2.0 * l1);
    let p22 = (p11 - l1 * p12 + q[(0, 1)]) / l2;
    let p = Matrix2::new(p11, p12, p12, p22);
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("ALE solution is not finite".into()));
    }
    Ok(p)
}

/// Build the full certificate (P plus eigenvalue bounds) and verify the
/// residual and definiteness contracts.
pub fn certificate(l1: f64, l2: f64, q: Matrix2<f64>) -> Result<LyapunovCertificate> {
    let p = solve_ale_2x2(l1, l2, &q)?;
    let a = a_closed(l1, l2, 1.0);
    let residual = (a.transpose() * p + p * a + q).norm();
    if residual > ALE_RESIDUAL_TOL * q.norm() {
        return Err(Error::Domain(format!(
            "ALE residual {residual} exceeds tolerance"
        )));
    }
    let (pmin, pmax) = sym_eigenvalues(&p);
    if pmin <= 0.0 {
        return Err(Error::Infeasible("P is not positive definite".into()));
    }
    let (qmin, _) = sym_eigenvalues(&q);
    Ok(LyapunovCertificate {
        l: (l1, l2),
        q,
        p,
        lambda_min_q: qmin,
        lambda_max_p: pmax,
        lambda_min_p: pmin,
    })
}

/// Identity-Q certificates for every subsystem of a gain set.
pub fn certificates_for(gains: &ObserverGains) -> Result<Vec<LyapunovCertificate>> {
    gains
        .per_subsystem
        .iter()
        .map(|sg| certificate(sg.l1, sg.l2, Matrix2::identity()))
        .collect()
}

/// Result of the spectrum-scaling verification
/// `eig(A0 - Gamma L C0) = gamma * eig(A0 - L C0)`.
#[derive(Debug, Clone)]
pub struct ScalingCheck {
    pub spectrum_unit: [Complex64; 2],
    pub spectrum_scaled: [Complex64; 2],
    pub max_rel_deviation: f64,
    pub pass: bool,
}

fn eig_2x2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = Complex64::new(m[(0, 0)] + m[(1, 1)], 0.0);
    let det = Complex64::new(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)], 0.0);
    let disc = (tr * tr - 4.0 * det).sqrt();
    let mut roots = [(tr - disc) / 2.0, (tr + disc) / 2.0];
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    roots
}

pub fn eigenvalue_scaling_check(l1: f64, l2: f64, gamma: f64) -> ScalingCheck {
    let unit = eig_2x2(&a_closed(l1, l2, 1.0));
    let scaled = eig_2x2(&a_closed(l1, l2, gamma));
    let mut predicted = [unit[0] * gamma, unit[1] * gamma];
    predicted.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut max_rel = 0.0f64;
    for (s, p) in scaled.iter().zip(&predicted) {
        let rel = (s - p).norm() / (1.0 + p.norm());
        max_rel = max_rel.max(rel);
    }
    ScalingCheck {
        spectrum_unit: unit,
        spectrum_scaled: scaled,
        max_rel_deviation: max_rel,
        pass: max_rel <= 1e-10,
    }
}

/// Nonsmooth coordinates of one subsystem error: `(phi1(e1), e2)`.
pub fn epsilon_vec(e: (f64, f64), mu: MuPair) -> Result<Vector2<f64>> {
    Ok(Vector2::new(phi1(e.0, mu)?, e.1))
}

/// Gamma-scaled coordinates `xi = (eps1, eps2 / gamma)`.
pub fn xi_vec(eps: Vector2<f64>, gamma: f64) -> Result<Vector2<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(Vector2::new(eps[0], eps[1] / gamma))
}

/// `V_i = xi' P_i xi`.
pub fn lyap_value(cert: &LyapunovCertificate, xi: &Vector2<f64>) -> f64 {
    (xi.transpose() * cert.p * xi)[(0, 0)]
}

/// `V = sum_i V_i` over per-subsystem xi vectors.
pub fn lyap_total(certs: &[LyapunovCertificate], xis: &[Vector2<f64>]) -> f64 {
    certs
        .iter()
        .zip(xis)
        .map(|(c, xi)| lyap_value(c, xi))
        .sum()
}

/// Estimated interconnection bound constants. Entry `[i][j]` bounds the
/// contribution of subsystem j's error to subsystem i's rho term; the tilde
/// matrices carry the cascade zeros `[i][j] = 0` for `j >= i`.
#[derive(Debug, Clone, Serialize)]
pub struct InterconnectionBounds {
    pub alpha0: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub alpha_tilde: Vec<Vec<f64>>,
    pub beta_tilde: Vec<Vec<f64>>,
}

impl InterconnectionBounds {
    pub fn zero(n: usize) -> Self {
        let z = vec![vec![0.0; n]; n];
        Self {
            alpha0: 0.0,
            alpha: z.clone(),
            beta: z.clone(),
            alpha_tilde: z.clone(),
            beta_tilde: z,
        }
    }

    /// Check the bound inequalities against precomputed `(|rho1|, |rho2|, e)`
    /// samples; returns the number of violated sample/subsystem pairs.
    pub fn count_violations(&self, samples: &[(Vec<f64>, Vec<f64>, Vec<f64>)], tol: f64) -> usize {
        let n = self.alpha.len();
        let mut violations = 0;
        for (rho1, rho2, e) in samples {
            for i in 0..n {
                let mut bound1 = 0.0;
                let mut bound2 = self.alpha0;
                for j in 0..n {
                    let e1 = e[2 * j].abs();
                    let e2 = e[2 * j + 1].abs();
                    bound1 += self.alpha_tilde[i][j] * e1 + self.beta_tilde[i][j] * e2;
                    bound2 += self.alpha[i][j] * e1 + self.beta[i][j] * e2;
                }
                if rho1[i] > bound1 * (1.0 + tol) + tol {
                    violations += 1;
                }
                if rho2[i] > bound2 * (1.0 + tol) + tol {
                    violations += 1;
                }
            }
        }
        violations
    }
}

/// Fit the smallest-envelope nonnegative constants satisfying the rho bounds
/// at every sample of a trajectory.
///
/// Per sample the magnitude |rho| is distributed over the admissible terms
/// proportionally to their squared magnitude (the second channel also carries
/// a unit-weight constant term feeding `alpha0`); columnwise maxima over the
/// samples then give constants that hold pointwise by construction.
pub fn estimate_interconnection_bounds(
    traj: &Trajectory,
    sys: &InterconnectedSystem,
    obs: &ObserverPlant,
) -> Result<InterconnectionBounds> {
    let n = sys.n_subsystems();
    let samples = traj.len();
    if samples < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 trajectory samples, got {samples}"
        )));
    }
    let lay = sys.layout();
    let _ = obs; // model functions are shared with the system
    let mut b = InterconnectionBounds::zero(n);
    for k in 0..samples {
        let x = &traj.x[k];
        let xhat = &traj.xhat[k];
        let y = &traj.y_clean[k];
        let u = &traj.u[k];
        let w = &traj.w[k];
        let t = traj.times[k];
        let e: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
        for i in 0..n {
            let (rho1, rho2) = crate::observer::rho_terms(sys, i, x, xhat, y, u, w, t);
            // Channel 1: only upstream terms are admissible (cascade).
            let r1 = rho1.abs();
            if r1 > 0.0 {
                let mut w2 = 0.0;
                for j in 0..i {
                    w2 += e[lay.idx(j, 0)].powi(2) + e[lay.idx(j, 1)].powi(2);
                }
                if w2 > 0.0 {
                    for j in 0..i {
                        let c1 = r1 * e[lay.idx(j, 0)].abs() / w2;
                        let c2 = r1 * e[lay.idx(j, 1)].abs() / w2;
                        b.alpha_tilde[i][j] = b.alpha_tilde[i][j].max(c1);
                        b.beta_tilde[i][j] = b.beta_tilde[i][j].max(c2);
                    }
                }
            }
            // Channel 2: all terms plus the constant.
            let r2 = rho2.abs();
            if r2 > 0.0 {
                let mut w2 = 1.0;
                for j in 0..n {
                    w2 += e[lay.idx(j, 0)].powi(2) + e[lay.idx(j, 1)].powi(2);
                }
                b.alpha0 = b.alpha0.max(r2 / w2);
                for j in 0..n {
                    let c1 = r2 * e[lay.idx(j, 0)].abs() / w2;
                    let c2 = r2 * e[lay.idx(j, 1)].abs() / w2;
                    b.alpha[i][j] = b.alpha[i][j].max(c1);
                    b.beta[i][j] = b.beta[i][j].max(c2);
                }
            }
        }
    }
    Ok(b)
}

/// Per-subsystem feasibility verdict at the configured gains, plus the
/// minimal global gamma found by bisection.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub eta: f64,
    /// `c_i`: coefficient of ||xi_i|| in the final decrease inequality.
    pub c_lin: Vec<f64>,
    /// Curly-bracket coefficient of ||xi_i||^2.
    pub c_quad: Vec<f64>,
    pub feasible_per_subsystem: Vec<bool>,
    pub feasible: bool,
    /// Minimal global gamma for which both coefficient families are positive;
    /// `None` when no gamma in [1e-3, 1e6] works (e.g. HGO with alpha0 > 0).
    pub gamma_min: Option<f64>,
    /// Omega-region coefficients: entry `[i][j]` multiplies ||xi_j|| in the
    /// lower bound on ||xi_i|| (zero on the diagonal and for j >= i).
    pub omega_coeffs: Vec<Vec<f64>>,
}

struct FeasibilityInputs<'a> {
    certs: &'a [LyapunovCertificate],
    bounds: &'a InterconnectionBounds,
    gains: &'a ObserverGains,
    g_min: &'a [f64],
    eta: f64,
}

fn coefficients(inp: &FeasibilityInputs, gamma_override: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = inp.certs.len();
    let gamma = |i: usize| gamma_override.unwrap_or(inp.gains.per_subsystem[i].gamma);
    let mu = |i: usize| inp.gains.per_subsystem[i].mu;
    let mut c_lin = Vec::with_capacity(n);
    let mut c_quad = Vec::with_capacity(n);
    for i in 0..n {
        let gi = gamma(i);
        let base = inp.eta * inp.g_min[i] * inp.certs[i].lambda_min_q;
        c_lin.push(
            0.5 * gi * base * mu(i).mu1 * mu(i).mu1
                - 2.0 * inp.certs[i].lambda_max_p * inp.bounds.alpha0 / gi,
        );
        let mut cross = 0.0;
        for j in 0..n {
            let gj = gamma(j);
            cross += inp.certs[i].lambda_max_p / (gi * gi)
                * (inp.bounds.alpha[i][j] / mu(j).mu2 + inp.bounds.beta[i][j] * gj)
                + inp.certs[j].lambda_max_p / (gi * gi)
                    * (inp.bounds.alpha[i][i] / mu(i).mu2 + inp.bounds.beta[i][i] * gi);
        }
        c_quad.push(base * mu(i).mu2 - cross);
    }
    (c_lin, c_quad)
}

/// Evaluate the decrease-inequality coefficients at the configured gains and
/// locate the minimal feasible global gamma by bisection.
pub fn gain_feasibility(
    certs: &[LyapunovCertificate],
    bounds: &InterconnectionBounds,
    gains: &ObserverGains,
    g_min: &[f64],
    eta: f64,
) -> FeasibilityReport {
    let n = certs.len();
    let inp = FeasibilityInputs {
        certs,
        bounds,
        gains,
        g_min,
        eta,
    };
    let (c_lin, c_quad) = coefficients(&inp, None);
    let feasible_per_subsystem: Vec<bool> = (0..n)
        .map(|i| c_lin[i] > 0.0 && c_quad[i] > 0.0)
        .collect();
    let feasible = feasible_per_subsystem.iter().all(|&f| f);

    let ok_at = |gamma: f64| -> bool {
        let (cl, cq) = coefficients(&inp, Some(gamma));
        cl.iter().all(|&c| c > 0.0) && cq.iter().all(|&c| c > 0.0)
    };
    let (mut lo, mut hi) = (1e-3, 1e6);
    let gamma_min = if !ok_at(hi) {
        None
    } else if ok_at(lo) {
        Some(lo)
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok_at(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };

    let mut omega_coeffs = vec![vec![0.0; n]; n];
    for i in 0..n {
        let gi = gains.per_subsystem[i].gamma;
        let pref = 2.0 * certs[i].lambda_max_p
            / ((1.0 - eta) * g_min[i] * certs[i].lambda_min_q * gi);
        for j in 0..n {
            if j == i {
                continue;
            }
            let gj = gains.per_subsystem[j].gamma;
            omega_coeffs[i][j] = pref
                * (bounds.alpha_tilde[i][j] / gains.per_subsystem[j].mu.mu2
                    + bounds.beta_tilde[i][j] * gj);
        }
    }

    FeasibilityReport {
        eta,
        c_lin,
        c_quad,
        feasible_per_subsystem,
        feasible,
        gamma_min,
        omega_coeffs,
    }
}

/// Result of decrease monitoring along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DecreaseReport {
    pub violations: usize,
    /// Times of the first few violating steps (capped at 32).
    pub violation_times: Vec<f64>,
    pub v_per_subsystem: Vec<Vec<f64>>,
    pub v_total: Vec<f64>,
    pub xi_norms: Vec<Vec<f64>>,
    /// Per-sample flag: full state inside the Omega region.
    pub in_omega: Vec<bool>,
}

/// Walk a trajectory, evaluate V per subsystem, and flag steps whose start and
/// end both lie inside the Omega region yet whose total V increased by more
/// than `tol_V = 1e-9 + 1e-6 V`.
pub fn monitor_decrease(
    traj: &Trajectory,
    certs: &[LyapunovCertificate],
    gains: &ObserverGains,
    bounds: &InterconnectionBounds,
    g_min: &[f64],
    eta: f64,
) -> Result<DecreaseReport> {
    let n = certs.len();
    let samples = traj.len();
    let report = gain_feasibility(certs, bounds, gains, g_min, eta);
    let omega = &report.omega_coeffs;

    let mut v_per = vec![Vec::with_capacity(samples); n];
    let mut v_total = Vec::with_capacity(samples);
    let mut xi_norms = vec![Vec::with_capacity(samples); n];
    let mut in_omega = Vec::with_capacity(samples);
    for k in 0..samples {
        let mut xis = Vec::with_capacity(n);
        for i in 0..n {
            let sg = &gains.per_subsystem[i];
            let e1 = traj.xhat[k][2 * i] - traj.x[k][2 * i];
            let e2 = traj.xhat[k][2 * i + 1] - traj.x[k][2 * i + 1];
            let eps = epsilon_vec((e1, e2), sg.mu)?;
            let xi = xi_vec(eps, sg.gamma)?;
            xis.push(xi);
        }
        let norms: Vec<f64> = xis.iter().map(|xi| xi.norm()).collect();
        let inside = (0..n).all(|i| {
            let radius: f64 = (0..n).map(|j| omega[i][j] * norms[j]).sum();
            norms[i] >= radius
        });
        let mut tot = 0.0;
        for i in 0..n {
            let v = lyap_value(&certs[i], &xis[i]);
            v_per[i].push(v);
            xi_norms[i].push(norms[i]);
            tot += v;
        }
        v_total.push(tot);
        in_omega.push(inside);
    }

    let mut violations = 0;
    let mut violation_times = Vec::new();
    for k in 1..samples {
        if in_omega[k - 1] && in_omega[k] {
            let dv = v_total[k] - v_total[k - 1];
            let tol = 1e-9 + 1e-6 * v_total[k - 1];
            if dv > tol {
                violations += 1;
                if violation_times.len() < 32 {
                    violation_times.push(traj.times[k]);
                }
            }
        }
    }

    Ok(DecreaseReport {
        violations,
        violation_times,
        v_per_subsystem: v_per,
        v_total,
        xi_norms,
        in_omega,
    })
}
