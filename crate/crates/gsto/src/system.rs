//! The interconnected plant class and its strong-observability map.
//!
//! A plant is an ordered collection of N two-state subsystems
//!
//! ```text
//! x_i1' = f_i1(y, u, x_12..x_{(i-1)2}, t) + g_i(y, u, t) x_i2
//! x_i2' = f_i2(x, u, t) + delta_i(x, u, w, t)
//! y_i   = x_i1
//! ```
//!
//! where `f_i1` of subsystem i may consume only the *upstream* second states
//! (cascade interconnection), `g_i` is strictly positive, and `delta_i` is an
//! unknown perturbation that only the truth-side simulation ever evaluates.

use crate::observer::ObserverGains;
use crate::{Error, Result};
use std::sync::Arc;

/// Measured-channel drift: `(y, u, upstream_x2, t) -> f64`. The third argument
/// holds `x_12 .. x_{(i-1)2}` in ascending subsystem order.
pub type F1Fn = Arc<dyn Fn(&[f64], &[f64], &[f64], f64) -> f64 + Send + Sync>;
/// Known (possibly discontinuous) drift of the second state: `(x, u, t) -> f64`.
pub type F2Fn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
/// Input-channel gain: `(y, u, t) -> f64`.
pub type GainFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
/// Unknown perturbation: `(x, u, w, t) -> f64`. Truth-side only.
pub type DeltaFn = Arc<dyn Fn(&[f64], &[f64], &[f64], f64) -> f64 + Send + Sync>;

/// One subsystem of the interconnection.
#[derive(Clone)]
pub struct SubsystemModel {
    pub f1: F1Fn,
    pub f2: F2Fn,
    pub g: GainFn,
    pub delta: DeltaFn,
    /// Declared `(g_min, g_max)` with `0 < g_min <= g_max`; checked on every
    /// evaluation of `g`.
    pub g_bounds: (f64, f64),
}

impl SubsystemModel {
    /// Evaluate `g` and enforce the declared bounds.
    pub fn eval_g(&self, index: usize, y: &[f64], u: &[f64], t: f64) -> Result<f64> {
        let v = (self.g)(y, u, t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "g",
                subsystem: index,
                t,
            });
        }
        let (gm, gmax) = self.g_bounds;
        if v < gm || v > gmax {
            return Err(Error::GainBoundViolation {
                subsystem: index,
                value: v,
                g_min: gm,
                g_max: gmax,
                t,
            });
        }
        Ok(v)
    }
}

/// Fixed flat ordering of the 2N states: `[x_11, x_12, x_21, x_22, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_subsystems: usize,
}

impl StateLayout {
    pub fn new(n_subsystems: usize) -> Self {
        Self { n_subsystems }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_subsystems
    }

    /// Flat index of state `(i, j)` with `i` the 0-based subsystem and
    /// `j in {0, 1}` the channel.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_subsystems && j < 2);
        2 * i + j
    }

    /// Stack of measured channels `[x_11, x_21, ...]`.
    pub fn measured(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_subsystems).map(|i| x[self.idx(i, 0)]).collect()
    }

    /// Upstream second states `x_12 .. x_{(i-1)2}` for subsystem `i`.
    pub fn upstream_x2(&self, x: &[f64], i: usize) -> Vec<f64> {
        (0..i).map(|j| x[self.idx(j, 1)]).collect()
    }
}

/// Ordered interconnection of subsystems; immutable after construction.
#[derive(Clone)]
pub struct InterconnectedSystem {
    subsystems: Vec<SubsystemModel>,
    input_dim: usize,
    layout: StateLayout,
}

/// Findings of [`InterconnectedSystem::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n_subsystems: usize,
    pub state_dim: usize,
    pub output_dim: usize,
    pub input_dim: usize,
    /// One entry per probe failure: (subsystem, t, message).
    pub violations: Vec<(usize, f64, String)>,
    /// Whether an attached gain set satisfies the Theorem 1 prerequisites
    /// (l_ij > 0, gamma > 0); `None` when no gains were supplied.
    pub gains_admissible: Option<bool>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.gains_admissible.unwrap_or(true)
    }
}

impl InterconnectedSystem {
    pub fn new(subsystems: Vec<SubsystemModel>, input_dim: usize) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::Domain("at least one subsystem required".into()));
        }
        for (i, s) in subsystems.iter().enumerate() {
            let (gm, gmax) = s.g_bounds;
            if !(gm > 0.0 && gmax >= gm) {
                return Err(Error::Domain(format!(
                    "subsystem {i}: g_bounds must satisfy 0 < g_min <= g_max, got ({gm}, {gmax})"
                )));
            }
        }
        let layout = StateLayout::new(subsystems.len());
        Ok(Self {
            subsystems,
            input_dim,
            layout,
        })
    }

    pub fn n_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn state_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn subsystem(&self, i: usize) -> &SubsystemModel {
        &self.subsystems[i]
    }

    pub fn subsystems(&self) -> &[SubsystemModel] {
        &self.subsystems
    }

    fn check_dims(&self, x: &[f64], u: &[f64], w: Option<&[f64]>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(Error::Dimension {
                what: "input",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        if let Some(w) = w {
            if w.len() != self.n_subsystems() {
                return Err(Error::Dimension {
                    what: "unknown input",
                    expected: self.n_subsystems(),
                    got: w.len(),
                });
            }
        }
        Ok(())
    }

    /// Truth-side right-hand side of the plant, including the unknown
    /// perturbations.
    pub fn eval_plant_rhs(&self, x: &[f64], u: &[f64], w: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dims(x, u, Some(w))?;
        let lay = self.layout;
        let y = lay.measured(x);
        let mut dx = vec![0.0; lay.dim()];
        for (i, s) in self.subsystems.iter().enumerate() {
            let up = lay.upstream_x2(x, i);
            let g = s.eval_g(i, &y, u, t)?;
            let d1 = (s.f1)(&y, u, &up, t) + g * x[lay.idx(i, 1)];
            let d2 = (s.f2)(x, u, t) + (s.delta)(x, u, w, t);
            if !d1.is_finite() {
                return Err(Error::NonFinite {
                    context: "plant rhs, channel 1",
                    subsystem: i,
                    t,
                });
            }
            if !d2.is_finite() {
                return Err(Error::NonFinite {
                    context: "plant rhs, channel 2",
                    subsystem: i,
                    t,
                });
            }
            dx[lay.idx(i, 0)] = d1;
            dx[lay.idx(i, 1)] = d2;
        }
        Ok(dx)
    }

    /// Observability map `(y, y')` of the state. Independent of the unknown
    /// inputs.
    pub fn observability_map(&self, x: &[f64], u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(x, u, None)?;
        let lay = self.layout;
        let y = lay.measured(x);
        let mut ydot = vec![0.0; self.n_subsystems()];
        for (i, s) in self.subsystems.iter().enumerate() {
            let up = lay.upstream_x2(x, i);
            let g = s.eval_g(i, &y, u, t)?;
            let v = (s.f1)(&y, u, &up, t) + g * x[lay.idx(i, 1)];
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "observability map",
                    subsystem: i,
                    t,
                });
            }
            ydot[i] = v;
        }
        Ok((y, ydot))
    }

    /// Inverse of the observability map, computed in ascending subsystem order
    /// so each `f_i1` sees the already-recovered upstream second states.
    pub fn invert_observability(
        &self,
        y: &[f64],
        ydot: &[f64],
        u: &[f64],
        t: f64,
    ) -> Result<Vec<f64>> {
        let n = self.n_subsystems();
        if y.len() != n || ydot.len() != n {
            return Err(Error::Dimension {
                what: "output",
                expected: n,
                got: y.len().min(ydot.len()),
            });
        }
        let lay = self.layout;
        let mut x = vec![0.0; lay.dim()];
        for (i, s) in self.subsystems.iter().enumerate() {
            let up = lay.upstream_x2(&x, i);
            let g = s.eval_g(i, y, u, t)?;
            x[lay.idx(i, 0)] = y[i];
            x[lay.idx(i, 1)] = (ydot[i] - (s.f1)(y, u, &up, t)) / g;
        }
        Ok(x)
    }

    /// Probe `g_i` over a caller-supplied grid of `(y, u, t)` samples and
    /// report any bound violations, together with basic structural facts and
    /// (optionally) whether a gain set satisfies the theorem prerequisites.
    pub fn validate(
        &self,
        probe: &[(Vec<f64>, Vec<f64>, f64)],
        gains: Option<&ObserverGains>,
    ) -> ValidationReport {
        let mut violations = Vec::new();
        for (y, u, t) in probe {
            for (i, s) in self.subsystems.iter().enumerate() {
                if let Err(e) = s.eval_g(i, y, u, *t) {
                    violations.push((i, *t, e.to_string()));
                }
            }
        }
        let gains_admissible = gains.map(|gs| {
            gs.per_subsystem.len() == self.n_subsystems()
                && gs
                    .per_subsystem
                    .iter()
                    .all(|sg| sg.l1 > 0.0 && sg.l2 > 0.0 && sg.gamma > 0.0)
        });
        ValidationReport {
            n_subsystems: self.n_subsystems(),
            state_dim: self.state_dim(),
            output_dim: self.n_subsystems(),
            input_dim: self.input_dim,
            violations,
            gains_admissible,
        }
    }
}

/// Zero-function helpers for building test and benchmark systems.
pub fn zero_f1() -> F1Fn {
    Arc::new(|_, _, _, _| 0.0)
}

pub fn zero_f2() -> F2Fn {
    Arc::new(|_, _, _| 0.0)
}

pub fn zero_delta() -> DeltaFn {
    Arc::new(|_, _, _, _| 0.0)
}

pub fn unit_gain() -> GainFn {
    Arc::new(|_, _, _| 1.0)
}
