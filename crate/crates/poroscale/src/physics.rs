//! Physics function registry: reaction rate, surface rate, body force,
//! boundary pressure and initial fields, all resolved from named specs with
//! parameters. Every built-in is testable in isolation; no expression
//! evaluation.

use crate::error::{Error, Result};
use crate::geometry::smooth_step;
use crate::la::{Mat2, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A named function with parameters, as it appears in configuration files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FunctionSpec {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        FunctionSpec {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| {
            Error::Config(format!("function '{}' missing parameter '{key}'", self.name))
        })
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// Reaction rate `u -> f(u)` (Lipschitz with linear growth).
#[derive(Debug, Clone)]
pub enum ReactionRate {
    Zero,
    Constant { c: f64 },
    Linear { c0: f64, c1: f64 },
}

impl ReactionRate {
    pub fn resolve(spec: &FunctionSpec) -> Result<Self> {
        match spec.name.as_str() {
            "zero" => Ok(ReactionRate::Zero),
            "constant" => Ok(ReactionRate::Constant { c: spec.get("c")? }),
            "linear" => Ok(ReactionRate::Linear {
                c0: spec.get_or("c0", 0.0),
                c1: spec.get("c1")?,
            }),
            other => Err(Error::Config(format!("unknown reaction rate '{other}'"))),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ReactionRate::Zero => 0.0,
            ReactionRate::Constant { c } => *c,
            ReactionRate::Linear { c0, c1 } => c0 + c1 * u,
        }
    }
}

/// Surface reaction rate `(u, R) -> g(u, R)` driving the radius ODE.
///
/// Built-ins are constructed sign-compliant: `g >= 0` at and below `R_min`,
/// `g <= 0` at and above `R_max` (so radii can neither vanish nor touch the
/// cell boundary), bounded by `c_g` and Lipschitz.
#[derive(Debug, Clone)]
pub enum SurfaceRate {
    Zero,
    Constant {
        c: f64,
    },
    /// `g = kappa (r_mid - R)`: exponential relaxation towards `r_mid`.
    LinearRelaxation {
        kappa: f64,
        r_mid: f64,
    },
    /// Precipitation/dissolution rate `clamp(k_p u - k_d, -cap, cap)` with
    /// smooth tapers that kill growth near `R_max` and shrinkage near
    /// `R_min`.
    TaperedReaction {
        k_p: f64,
        k_d: f64,
        rate_cap: f64,
        delta: f64,
        r_min: f64,
        r_max: f64,
    },
}

/// Width multiplier of the smooth tapers. The transition profile `T`
/// satisfies `x / T(x) >= 0.8`, so stretching the band by 1.3 guarantees
/// `s(R) <= (R_max - R)/delta`; a Heun step with `dt <= delta / C_g` then
/// cannot overshoot the radius bounds.
pub const TAPER_STRETCH: f64 = 1.3;

impl SurfaceRate {
    pub fn resolve(spec: &FunctionSpec, r_min: f64, r_max: f64) -> Result<Self> {
        match spec.name.as_str() {
            "zero" => Ok(SurfaceRate::Zero),
            "constant" => Ok(SurfaceRate::Constant { c: spec.get("c")? }),
            "linear_relaxation" => {
                let r_mid = spec.get("r_mid")?;
                if !(r_min < r_mid && r_mid < r_max) {
                    return Err(Error::Config(format!(
                        "linear_relaxation requires R_min < r_mid < R_max, got r_mid = {r_mid}"
                    )));
                }
                Ok(SurfaceRate::LinearRelaxation {
                    kappa: spec.get("kappa")?,
                    r_mid,
                })
            }
            "tapered_reaction" => Ok(SurfaceRate::TaperedReaction {
                k_p: spec.get("k_p")?,
                k_d: spec.get_or("k_d", 0.0),
                rate_cap: spec.get_or("rate_cap", 1.0),
                delta: spec.get_or("delta", 0.02),
                r_min,
                r_max,
            }),
            other => Err(Error::Config(format!("unknown surface rate '{other}'"))),
        }
    }

    pub fn eval(&self, u: f64, r: f64) -> f64 {
        match self {
            SurfaceRate::Zero => 0.0,
            SurfaceRate::Constant { c } => *c,
            SurfaceRate::LinearRelaxation { kappa, r_mid } => kappa * (r_mid - r),
            SurfaceRate::TaperedReaction {
                k_p,
                k_d,
                rate_cap,
                delta,
                r_min,
                r_max,
            } => {
                let rate = (k_p * u - k_d).clamp(-rate_cap, *rate_cap);
                let band = TAPER_STRETCH * delta;
                let s_up = smooth_step(((r_max - r) / band).clamp(0.0, 1.0));
                let s_dn = smooth_step(((r - r_min) / band).clamp(0.0, 1.0));
                rate.max(0.0) * s_up + rate.min(0.0) * s_dn
            }
        }
    }

    /// Bound `|g| <= C_g` along confined trajectories.
    pub fn bound(&self, r_min: f64, r_max: f64) -> f64 {
        match self {
            SurfaceRate::Zero => 0.0,
            SurfaceRate::Constant { c } => c.abs(),
            SurfaceRate::LinearRelaxation { kappa, r_mid } => {
                kappa.abs() * (r_max - r_mid).max(r_mid - r_min)
            }
            SurfaceRate::TaperedReaction { rate_cap, .. } => *rate_cap,
        }
    }

    /// Lipschitz constant estimate (recorded, not asserted).
    pub fn lipschitz(&self) -> f64 {
        match self {
            SurfaceRate::Zero | SurfaceRate::Constant { .. } => 0.0,
            SurfaceRate::LinearRelaxation { kappa, .. } => kappa.abs(),
            SurfaceRate::TaperedReaction {
                k_p,
                rate_cap,
                delta,
                ..
            } => k_p.abs().max(rate_cap * 2.0 / (TAPER_STRETCH * delta)),
        }
    }

    /// Taper width: with `dt <= delta / C_g` the radius update cannot leave
    /// `[R_min, R_max]` (zero for rates without structural tapering).
    pub fn taper_delta(&self) -> f64 {
        match self {
            SurfaceRate::TaperedReaction { delta, .. } => *delta,
            SurfaceRate::LinearRelaxation { .. } => 0.0,
            _ => 0.0,
        }
    }
}

/// One offending sample of the sign-compliance check.
#[derive(Debug, Clone, Copy)]
pub struct SignViolation {
    pub u: f64,
    pub r: f64,
    pub g: f64,
}

/// Sample-based check of the sign conditions: `g(u, r) >= 0` for
/// `r <= R_min` and `g(u, r) <= 0` for `r >= R_max`, for all `u`.
pub fn check_sign_compliance(
    g: &SurfaceRate,
    r_min: f64,
    r_max: f64,
) -> std::result::Result<(), Vec<SignViolation>> {
    let mut violations = Vec::new();
    let us: Vec<f64> = (0..41).map(|k| -10.0 + 20.0 * k as f64 / 40.0).collect();
    for k in 0..9 {
        let r_low = r_min - 0.05 + 0.05 * k as f64 / 8.0;
        let r_high = r_max + 0.05 * k as f64 / 8.0;
        for &u in &us {
            let g_low = g.eval(u, r_low);
            if g_low < -1e-14 {
                violations.push(SignViolation { u, r: r_low, g: g_low });
            }
            let g_high = g.eval(u, r_high);
            if g_high > 1e-14 {
                violations.push(SignViolation { u, r: r_high, g: g_high });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        violations.truncate(8);
        Err(violations)
    }
}

/// Body force field `(t, x) -> h0`.
#[derive(Debug, Clone)]
pub enum BodyForce {
    Zero,
    Constant { x: f64, y: f64 },
    /// Divergence-free field `(ax sin(2 pi y), ay sin(2 pi x))`.
    Solenoidal { ax: f64, ay: f64 },
}

impl BodyForce {
    pub fn resolve(spec: &FunctionSpec) -> Result<Self> {
        match spec.name.as_str() {
            "zero" => Ok(BodyForce::Zero),
            "constant" => Ok(BodyForce::Constant {
                x: spec.get_or("x", 0.0),
                y: spec.get_or("y", 0.0),
            }),
            "solenoidal" => Ok(BodyForce::Solenoidal {
                ax: spec.get_or("ax", 1.0),
                ay: spec.get_or("ay", 0.0),
            }),
            other => Err(Error::Config(format!("unknown body force '{other}'"))),
        }
    }

    pub fn eval(&self, _t: f64, x: Vec2) -> Vec2 {
        match self {
            BodyForce::Zero => Vec2::ZERO,
            BodyForce::Constant { x: cx, y: cy } => Vec2::new(*cx, *cy),
            BodyForce::Solenoidal { ax, ay } => Vec2::new(
                ax * (std::f64::consts::TAU * x.y).sin(),
                ay * (std::f64::consts::TAU * x.x).sin(),
            ),
        }
    }
}

/// Boundary pressure `(t, x) -> p_b`.
#[derive(Debug, Clone)]
pub enum BoundaryPressure {
    Zero,
    Constant { c: f64 },
    Linear { c: f64, gx: f64, gy: f64 },
}

impl BoundaryPressure {
    pub fn resolve(spec: &FunctionSpec) -> Result<Self> {
        match spec.name.as_str() {
            "zero" => Ok(BoundaryPressure::Zero),
            "constant" => Ok(BoundaryPressure::Constant { c: spec.get("c")? }),
            "linear" => Ok(BoundaryPressure::Linear {
                c: spec.get_or("c", 0.0),
                gx: spec.get_or("gx", 0.0),
                gy: spec.get_or("gy", 0.0),
            }),
            other => Err(Error::Config(format!("unknown boundary pressure '{other}'"))),
        }
    }

    pub fn eval(&self, _t: f64, x: Vec2) -> f64 {
        match self {
            BoundaryPressure::Zero => 0.0,
            BoundaryPressure::Constant { c } => *c,
            BoundaryPressure::Linear { c, gx, gy } => c + gx * x.x + gy * x.y,
        }
    }
}

/// Initial scalar field over a rectangle.
#[derive(Debug, Clone)]
pub enum InitialField {
    Constant { c: f64 },
    /// `amp sin(pi xhat) sin(pi yhat)` in domain-normalized coordinates;
    /// vanishes on the boundary.
    ProductSine { amp: f64 },
    Gaussian { amp: f64, cx: f64, cy: f64, sigma: f64 },
}

impl InitialField {
    pub fn resolve(spec: &FunctionSpec) -> Result<Self> {
        match spec.name.as_str() {
            "constant" => Ok(InitialField::Constant { c: spec.get("c")? }),
            "product_sine" => Ok(InitialField::ProductSine {
                amp: spec.get_or("amp", 1.0),
            }),
            "gaussian" => Ok(InitialField::Gaussian {
                amp: spec.get_or("amp", 1.0),
                cx: spec.get("cx")?,
                cy: spec.get("cy")?,
                sigma: spec.get_or("sigma", 0.1),
            }),
            other => Err(Error::Config(format!("unknown initial field '{other}'"))),
        }
    }

    pub fn eval(&self, rect: [f64; 4], x: Vec2) -> f64 {
        match self {
            InitialField::Constant { c } => *c,
            InitialField::ProductSine { amp } => {
                let [ax, ay, bx, by] = rect;
                let xi = (x.x - ax) / (bx - ax);
                let eta = (x.y - ay) / (by - ay);
                amp * (std::f64::consts::PI * xi).sin() * (std::f64::consts::PI * eta).sin()
            }
            InitialField::Gaussian { amp, cx, cy, sigma } => {
                let d2 = (x.x - cx).powi(2) + (x.y - cy).powi(2);
                amp * (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

/// The resolved physics bundle consumed by the macro solver.
#[derive(Debug, Clone)]
pub struct PhysicsFunctions {
    pub f: ReactionRate,
    pub g: SurfaceRate,
    pub h0: BodyForce,
    pub p_b: BoundaryPressure,
    pub rho: f64,
    pub diffusion: Mat2,
    /// Bound on `|g|` along confined trajectories.
    pub c_g: f64,
    /// Lipschitz constant of `g` (recorded).
    pub l_g: f64,
}
