//! The generalized super-twisting observer and its high-gain degeneration.
//!
//! The observer copies the known part of the plant (`f1`, `f2`, `g` — never
//! `delta` or `w`) and injects `phi1`/`phi2` of the measured-channel error
//! `e_i1 = xhat_i1 - y_i`:
//!
//! ```text
//! xhat_i1' = -gamma_i   l_i1 g_i phi1(e_i1) + f_i1(y, u, xhat_up, t) + g_i xhat_i2
//! xhat_i2' = -gamma_i^2 l_i2 g_i phi2(e_i1) + f_i2(xhat, u, t)
//! ```
//!
//! With `mu_i1 = 0` every injection becomes linear and the scheme is exactly a
//! high-gain observer.

use crate::sta::{phi1, phi2, MuPair};
use crate::system::{F1Fn, F2Fn, GainFn, InterconnectedSystem, StateLayout, SubsystemModel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gains of one subsystem's observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsystemGains {
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    pub mu: MuPair,
}

/// Per-subsystem gain set. `gamma` may differ across subsystems; setting them
/// all equal recovers the single-parameter setting of the convergence theorem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    pub per_subsystem: Vec<SubsystemGains>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverMode {
    Gsto,
    Hgo,
}

impl ObserverGains {
    pub fn validate(&self) -> Result<()> {
        for (i, sg) in self.per_subsystem.iter().enumerate() {
            if !(sg.l1 > 0.0 && sg.l2 > 0.0 && sg.gamma > 0.0) {
                return Err(Error::Infeasible(format!(
                    "subsystem {i}: l1, l2, gamma must be positive, got ({}, {}, {})",
                    sg.l1, sg.l2, sg.gamma
                )));
            }
            if sg.mu.mu1 < 0.0 || sg.mu.mu2 < 0.0 {
                return Err(Error::Infeasible(format!(
                    "subsystem {i}: mu gains must be nonnegative"
                )));
            }
        }
        Ok(())
    }

    /// GSTO when every `mu1 > 0`, HGO when every `mu1 = 0`; mixed sets are
    /// rejected.
    pub fn mode(&self) -> Result<ObserverMode> {
        let hgo = self.per_subsystem.iter().filter(|sg| sg.mu.is_hgo()).count();
        if hgo == 0 {
            Ok(ObserverMode::Gsto)
        } else if hgo == self.per_subsystem.len() {
            Ok(ObserverMode::Hgo)
        } else {
            Err(Error::Infeasible(
                "mixed mu1 = 0 / mu1 > 0 across subsystems".into(),
            ))
        }
    }

    /// Same gains with every square-root term removed (`mu1 := 0`).
    pub fn hgo_variant(&self) -> Self {
        Self {
            per_subsystem: self
                .per_subsystem
                .iter()
                .map(|sg| SubsystemGains {
                    mu: MuPair {
                        mu1: 0.0,
                        mu2: sg.mu.mu2,
                    },
                    ..*sg
                })
                .collect(),
        }
    }
}

/// Observer-known part of one subsystem: no `delta`, no `w`.
#[derive(Clone)]
struct KnownSubsystem {
    f1: F1Fn,
    f2: F2Fn,
    g: GainFn,
    g_bounds: (f64, f64),
}

/// The observer plant. Construction clones only the known model functions of
/// the system, so the perturbations are structurally out of reach.
#[derive(Clone)]
pub struct ObserverPlant {
    known: Vec<KnownSubsystem>,
    gains: ObserverGains,
    mode: ObserverMode,
    input_dim: usize,
    layout: StateLayout,
}

impl ObserverPlant {
    pub fn from_system(sys: &InterconnectedSystem, gains: ObserverGains) -> Result<Self> {
        gains.validate()?;
        if gains.per_subsystem.len() != sys.n_subsystems() {
            return Err(Error::Dimension {
                what: "observer gains",
                expected: sys.n_subsystems(),
                got: gains.per_subsystem.len(),
            });
        }
        let mode = gains.mode()?;
        let known = sys
            .subsystems()
            .iter()
            .map(|s: &SubsystemModel| KnownSubsystem {
                f1: s.f1.clone(),
                f2: s.f2.clone(),
                g: s.g.clone(),
                g_bounds: s.g_bounds,
            })
            .collect();
        Ok(Self {
            known,
            gains,
            mode,
            input_dim: sys.input_dim(),
            layout: sys.layout(),
        })
    }

    pub fn mode(&self) -> ObserverMode {
        self.mode
    }

    pub fn gains(&self) -> &ObserverGains {
        &self.gains
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    fn eval_g(&self, i: usize, y: &[f64], u: &[f64], t: f64) -> Result<f64> {
        let s = &self.known[i];
        let v = (s.g)(y, u, t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "g",
                subsystem: i,
                t,
            });
        }
        let (gm, gmax) = s.g_bounds;
        if v < gm || v > gmax {
            return Err(Error::GainBoundViolation {
                subsystem: i,
                value: v,
                g_min: gm,
                g_max: gmax,
                t,
            });
        }
        Ok(v)
    }

    /// Observer right-hand side, driven by the delivered measurement `y`
    /// (noisy if noise is active) and the current estimate `xhat`.
    pub fn eval_observer_rhs(&self, xhat: &[f64], y: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        let lay = self.layout;
        if xhat.len() != lay.dim() {
            return Err(Error::Dimension {
                what: "observer state",
                expected: lay.dim(),
                got: xhat.len(),
            });
        }
        if y.len() != lay.n_subsystems {
            return Err(Error::Dimension {
                what: "measurement",
                expected: lay.n_subsystems,
                got: y.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(Error::Dimension {
                what: "input",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let mut dxh = vec![0.0; lay.dim()];
        for (i, s) in self.known.iter().enumerate() {
            let sg = &self.gains.per_subsystem[i];
            let g = self.eval_g(i, y, u, t)?;
            let e1 = xhat[lay.idx(i, 0)] - y[i];
            let up = lay.upstream_x2(xhat, i);
            let d1 = -sg.gamma * sg.l1 * g * phi1(e1, sg.mu)?
                + (s.f1)(y, u, &up, t)
                + g * xhat[lay.idx(i, 1)];
            let d2 = -sg.gamma * sg.gamma * sg.l2 * g * phi2(e1, sg.mu)? + (s.f2)(xhat, u, t);
            if !d1.is_finite() || !d2.is_finite() {
                return Err(Error::NonFinite {
                    context: "observer rhs",
                    subsystem: i,
                    t,
                });
            }
            dxh[lay.idx(i, 0)] = d1;
            dxh[lay.idx(i, 1)] = d2;
        }
        Ok(dxh)
    }
}

/// Analytic estimation-error dynamics
///
/// ```text
/// e_i1' = -gamma_i   l_i1 g_i phi1(e_i1) + g_i e_i2 + rho_i1
/// e_i2' = -gamma_i^2 l_i2 g_i phi2(e_i1) + rho_i2
/// ```
///
/// with the interconnection terms `rho` assembled from the model functions.
/// Must agree with `eval_observer_rhs - eval_plant_rhs` (evaluated on the
/// clean output) to 1e-12 componentwise.
pub fn eval_error_rhs(
    sys: &InterconnectedSystem,
    obs: &ObserverPlant,
    x: &[f64],
    xhat: &[f64],
    u: &[f64],
    w: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let lay = sys.layout();
    if xhat.len() != lay.dim() {
        return Err(Error::Dimension {
            what: "observer state",
            expected: lay.dim(),
            got: xhat.len(),
        });
    }
    let y = lay.measured(x);
    let mut de = vec![0.0; lay.dim()];
    for (i, s) in sys.subsystems().iter().enumerate() {
        let sg = &obs.gains().per_subsystem[i];
        let g = s.eval_g(i, &y, u, t)?;
        let e1 = xhat[lay.idx(i, 0)] - y[i];
        let e2 = xhat[lay.idx(i, 1)] - x[lay.idx(i, 1)];
        let (rho1, rho2) = rho_terms(sys, i, x, xhat, &y, u, w, t);
        de[lay.idx(i, 0)] = -sg.gamma * sg.l1 * g * phi1(e1, sg.mu)? + g * e2 + rho1;
        de[lay.idx(i, 1)] = -sg.gamma * sg.gamma * sg.l2 * g * phi2(e1, sg.mu)? + rho2;
    }
    Ok(de)
}

/// The interconnection terms of subsystem `i`:
/// `rho_i1 = f_i1(.., xhat_up, ..) - f_i1(.., x_up, ..)` (zero for i = 0) and
/// `rho_i2 = f_i2(xhat, u, t) - f_i2(x, u, t) - delta_i(x, u, w, t)`.
#[allow(clippy::too_many_arguments)]
pub fn rho_terms(
    sys: &InterconnectedSystem,
    i: usize,
    x: &[f64],
    xhat: &[f64],
    y: &[f64],
    u: &[f64],
    w: &[f64],
    t: f64,
) -> (f64, f64) {
    let lay = sys.layout();
    let s = sys.subsystem(i);
    let rho1 = if i == 0 {
        0.0
    } else {
        let up_hat = lay.upstream_x2(xhat, i);
        let up = lay.upstream_x2(x, i);
        (s.f1)(y, u, &up_hat, t) - (s.f1)(y, u, &up, t)
    };
    let rho2 = (s.f2)(xhat, u, t) - (s.f2)(x, u, t) - (s.delta)(x, u, w, t);
    (rho1, rho2)
}
