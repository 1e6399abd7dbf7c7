//! Radius-parameterized cell transformation and its derived tensors.
//!
//! The perforated unit cell `Y* = (0,1)^n \ B(R_max, m)` is mapped onto the
//! cell with obstacle radius `R` by the radial diffeomorphism
//!
//! ```text
//! psi(R; y) = m + alpha(|y - m|) (y - m)/|y - m|,
//! alpha(r)  = r + (R - R_max) chi(r),
//! ```
//!
//! where `chi` is a smooth cutoff equal to 1 up to `R_max` and 0 from
//! `(R_max + 0.5)/2` outward. Everything downstream (cell problems, effective
//! coefficients) consumes the Jacobian `F = grad(psi)^T`, its determinant `J`,
//! the adjugate `A = J F^{-1}` and the transformed diffusion tensor
//! `D0 = J F^{-1} D F^{-T}`, all available here in closed form.

use crate::error::{Error, Result};
use crate::la::{Mat2, Vec2};

/// Smooth bump `exp(-1/t)` for `t > 0`, zero otherwise.
fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Derivative of [`bump`]: `exp(-1/t)/t^2` for `t > 0`, zero otherwise.
fn bump_deriv(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp() / (t * t)
    } else {
        0.0
    }
}

/// Smooth transition rising from 0 at `x <= 0` to 1 at `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    let num = bump(x);
    let den = num + bump(1.0 - x);
    if den == 0.0 {
        if x >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        num / den
    }
}

/// Kind of cutoff profile. Only the smooth bump quotient is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    SmoothBump,
}

/// Cutoff profile `chi`: identically 1 on `[0, a]`, identically 0 on
/// `[b, inf)`, strictly decreasing and C-infinity in between.
///
/// Concrete form: the bump quotient in the normalized band coordinate,
/// `chi(s) = phi(x) / (phi(x) + phi(1 - x))` with `x = (b - s)/(b - a)` and
/// `phi(t) = exp(-1/t)` for `t > 0`, else 0. Normalizing the argument keeps
/// the maximum slope at `2/(b - a)`; feeding the raw distances to `phi`
/// would concentrate the whole transition into an O((b-a)^2) layer that
/// cell meshes cannot resolve.
#[derive(Debug, Clone, Copy)]
pub struct CutoffProfile {
    /// Inner plateau end (equals `R_max` in cell transforms).
    pub a: f64,
    /// Outer support end (equals `(R_max + 0.5)/2` in cell transforms).
    pub b: f64,
    pub kind: CutoffKind,
}

impl CutoffProfile {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < b && b < 0.5) {
            return Err(Error::Geometry(format!(
                "cutoff profile requires 0 < a < b < 0.5, got a = {a}, b = {b}"
            )));
        }
        Ok(CutoffProfile {
            a,
            b,
            kind: CutoffKind::SmoothBump,
        })
    }

    /// Evaluate `chi(s)`. Total on `s >= 0`.
    pub fn eval(&self, s: f64) -> f64 {
        if s <= self.a {
            1.0
        } else if s >= self.b {
            0.0
        } else {
            let x = (self.b - s) / (self.b - self.a);
            let num = bump(x);
            num / (num + bump(1.0 - x))
        }
    }

    /// Analytic derivative `chi'(s)`.
    pub fn deriv(&self, s: f64) -> f64 {
        if s <= self.a || s >= self.b {
            0.0
        } else {
            let width = self.b - self.a;
            let x = (self.b - s) / width;
            let p = bump(x);
            let q = bump(1.0 - x);
            let dp = bump_deriv(x);
            let dq = bump_deriv(1.0 - x);
            let den = p + q;
            // d/ds = -(1/width) d/dx
            -(dp * q + p * dq) / (den * den) / width
        }
    }
}

/// Evaluate a cutoff profile; thin wrapper kept as the public entry point.
pub fn cutoff_eval(profile: &CutoffProfile, s: f64) -> f64 {
    profile.eval(s)
}

/// The radius-parameterized diffeomorphism of the perforated unit cell,
/// together with the physical diffusion tensor it transports.
#[derive(Debug, Clone)]
pub struct CellTransform {
    /// Target obstacle radius (cell units).
    pub radius: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Cell midpoint m.
    pub center: Vec2,
    pub cutoff: CutoffProfile,
    /// Physical diffusion tensor D (symmetric positive definite).
    pub diffusion: Mat2,
}

/// Tensors of the transformation at one point: Jacobian `F`, determinant
/// `J`, adjugate `A = J F^{-1}` and transformed diffusion
/// `D0 = J F^{-1} D F^{-T}`.
#[derive(Debug, Clone, Copy)]
pub struct TensorSample {
    pub f: Mat2,
    pub j: f64,
    pub a: Mat2,
    pub d0: Mat2,
}

impl CellTransform {
    /// Build a transform targeting radius `r` within `[r_min, r_max]`.
    /// The cutoff is derived from `r_max` as in the construction of `psi`.
    pub fn new(r: f64, r_min: f64, r_max: f64, diffusion: Mat2) -> Result<Self> {
        if !(0.0 < r_min && r_min <= r && r <= r_max && r_max < 0.5) {
            return Err(Error::Geometry(format!(
                "cell transform requires 0 < R_min <= R <= R_max < 0.5, got R = {r}, R_min = {r_min}, R_max = {r_max}"
            )));
        }
        if !diffusion.is_spd() || (diffusion.m[0][1] - diffusion.m[1][0]).abs() > 1e-14 {
            return Err(Error::Geometry(
                "diffusion tensor must be symmetric positive definite".into(),
            ));
        }
        let cutoff = CutoffProfile::new(r_max, (r_max + 0.5) / 2.0)?;
        Ok(CellTransform {
            radius: r,
            r_min,
            r_max,
            center: Vec2::new(0.5, 0.5),
            cutoff,
            diffusion,
        })
    }

    /// Convenience constructor with isotropic unit diffusion.
    pub fn unit_diffusion(r: f64, r_min: f64, r_max: f64) -> Result<Self> {
        CellTransform::new(r, r_min, r_max, Mat2::IDENTITY)
    }

    /// `alpha(r) = r + (R - R_max) chi(r)`, the radial profile of `psi`.
    pub fn alpha(&self, r: f64) -> f64 {
        r + (self.radius - self.r_max) * self.cutoff.eval(r)
    }

    /// `alpha'(r) = 1 + (R - R_max) chi'(r)`.
    pub fn alpha_deriv(&self, r: f64) -> f64 {
        1.0 + (self.radius - self.r_max) * self.cutoff.deriv(r)
    }

    fn radial(&self, y: Vec2) -> (f64, Vec2) {
        let d = y - self.center;
        let r = d.norm();
        (r, d)
    }

    /// Map a point of the reference cell. Rejects points strictly inside the
    /// reference obstacle.
    pub fn psi(&self, y: Vec2) -> Result<Vec2> {
        let (r, d) = self.radial(y);
        if r < self.r_max - 1e-12 {
            return Err(Error::Geometry(format!(
                "psi: point at distance {r} lies inside the reference obstacle (R_max = {})",
                self.r_max
            )));
        }
        if r >= self.cutoff.b {
            return Ok(y);
        }
        Ok(self.center + d * (self.alpha(r) / r))
    }

    /// Invert `psi` by root-finding on the strictly monotone scalar `alpha`.
    /// Safeguarded Newton with a bisection fallback, tolerance 1e-12.
    pub fn psi_inverse(&self, z: Vec2) -> Result<Vec2> {
        let (rho, d) = self.radial(z);
        if rho < self.radius - 1e-12 {
            return Err(Error::Geometry(format!(
                "psi_inverse: point at distance {rho} lies inside the obstacle of radius {}",
                self.radius
            )));
        }
        if rho >= self.cutoff.b {
            return Ok(z);
        }
        // Solve alpha(r) = rho for r in [R_max, b].
        let (mut lo, mut hi) = (self.r_max, self.cutoff.b);
        let mut r = rho - (self.radius - self.r_max); // exact if chi = 1 there
        if !(lo..=hi).contains(&r) {
            r = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let g = self.alpha(r) - rho;
            if g.abs() <= 1e-12 {
                break;
            }
            if g > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let dg = self.alpha_deriv(r);
            let newton = r - g / dg;
            r = if dg > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let scale = r / rho;
        Ok(self.center + d * scale)
    }

    /// Closed-form tensors at a reference point: with `r = |y - m|` and unit
    /// radial direction `e`,
    /// `F = alpha'(r) e e^T + (alpha(r)/r) (I - e e^T)` and
    /// `J = alpha'(r) (alpha(r)/r)^{n-1}` (here n = 2).
    ///
    /// Points marginally inside the reference obstacle evaluate by smooth
    /// continuation (`alpha` is defined for all positive radii); polygonal
    /// hole boundaries put quadrature points into the O(h^2) chord slivers.
    /// Clearly interior points are rejected.
    pub fn tensors_at(&self, y: Vec2) -> Result<TensorSample> {
        let (r, d) = self.radial(y);
        if r < 1e-12 {
            return Err(Error::Geometry("tensors_at: point equals the cell midpoint".into()));
        }
        if r < 0.8 * self.r_max {
            return Err(Error::Geometry(format!(
                "tensors_at: point at distance {r} lies inside the reference obstacle"
            )));
        }
        if r >= self.cutoff.b {
            return Ok(TensorSample {
                f: Mat2::IDENTITY,
                j: 1.0,
                a: Mat2::IDENTITY,
                d0: self.diffusion,
            });
        }
        let e = d * (1.0 / r);
        let ap = self.alpha_deriv(r);
        let q = self.alpha(r) / r;
        let ee = Mat2::outer(e, e);
        let f = ee.scale(ap).add_mat(&Mat2::IDENTITY.sub_mat(&ee).scale(q));
        let j = ap * q;
        let a = f.adjugate();
        // F is symmetric, so F^{-T} = F^{-1} and D0 = (1/J) A D A^T.
        let d0 = a.mul_mat(&self.diffusion).mul_mat(&a.transpose()).scale(1.0 / j);
        Ok(TensorSample { f, j, a, d0 })
    }

    /// Centered finite-difference divergence of the columns of `A`; the
    /// adjugate of a deformation gradient is divergence free, so the result
    /// is O(h^2) small.
    pub fn piola_residual(&self, y: Vec2, h: f64) -> Result<Vec2> {
        self.piola_residual_perturbed(y, h, 0.0)
    }

    /// Test hook: adds `perturb * r^2` to `A[0][0]` before differencing, so
    /// sensitivity of the check itself can be exercised.
    ///
    /// The stencil is the 4th-order centered difference; the cutoff's bump
    /// quotient has third derivatives of order 1e7, which would leave the
    /// plain 2nd-order stencil near 1e-6 truncation at h = 1e-5.
    pub fn piola_residual_perturbed(&self, y: Vec2, h: f64, perturb: f64) -> Result<Vec2> {
        let a_at = |p: Vec2| -> Result<Mat2> {
            let mut a = self.tensors_at(p)?.a;
            if perturb != 0.0 {
                let r2 = (p - self.center).dot(p - self.center);
                a.m[0][0] += perturb * r2;
            }
            Ok(a)
        };
        // div applies to the columns: residual_i = sum_j d_j A_{j i}
        let mut res = Vec2::ZERO;
        for j in 0..2 {
            let step = Vec2::basis(j);
            let a_p2 = a_at(y + step * (2.0 * h))?;
            let a_p1 = a_at(y + step * h)?;
            let a_m1 = a_at(y - step * h)?;
            let a_m2 = a_at(y - step * (2.0 * h))?;
            for i in 0..2 {
                let d = (-a_p2.m[j][i] + 8.0 * a_p1.m[j][i] - 8.0 * a_m1.m[j][i] + a_m2.m[j][i])
                    / (12.0 * h);
                if i == 0 {
                    res.x += d;
                } else {
                    res.y += d;
                }
            }
        }
        Ok(res)
    }

    /// Residual of `J xi = A^T grad((psi(y) - y) . xi) + A^T xi`, with the
    /// gradient taken by centered differences (4th-order stencil; see
    /// [`Self::piola_residual_perturbed`]).
    pub fn rhs_identity_residual(&self, y: Vec2, xi: Vec2, h: f64) -> Result<Vec2> {
        let scalar = |p: Vec2| -> Result<f64> {
            let im = self.psi(p)?;
            Ok((im - p).dot(xi))
        };
        let mut grad = Vec2::ZERO;
        for j in 0..2 {
            let step = Vec2::basis(j);
            let d = (-scalar(y + step * (2.0 * h))? + 8.0 * scalar(y + step * h)?
                - 8.0 * scalar(y - step * h)?
                + scalar(y - step * (2.0 * h))?)
                / (12.0 * h);
            if j == 0 {
                grad.x = d;
            } else {
                grad.y = d;
            }
        }
        let t = self.tensors_at(y)?;
        let at = t.a.transpose();
        Ok(xi * t.j - at.mul_vec(grad) - at.mul_vec(xi))
    }

    /// Porosity of the mapped cell and its geometric companions, all in
    /// closed form for a disc of radius `R`:
    /// `theta = 1 - pi R^2`, `|Gamma| = 2 pi R`, `d theta/dR = -2 pi R`.
    pub fn porosity(&self) -> Porosity {
        porosity_of_radius(self.radius)
    }
}

/// Porosity data for an obstacle radius.
#[derive(Debug, Clone, Copy)]
pub struct Porosity {
    pub theta: f64,
    pub dtheta_dr: f64,
    pub surface: f64,
}

/// Closed-form porosity of the unit cell with a disc obstacle of radius `r`.
pub fn porosity_of_radius(r: f64) -> Porosity {
    let surface = 2.0 * std::f64::consts::PI * r;
    Porosity {
        theta: 1.0 - std::f64::consts::PI * r * r,
        dtheta_dr: -surface,
        surface,
    }
}

/// Uniform grid over the reference cell `Y*` (points at radial distance at
/// least `r_inner` from the center), used by verification sweeps.
pub fn cell_sample_grid(n: usize, r_inner: f64) -> Vec<Vec2> {
    let m = Vec2::new(0.5, 0.5);
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = Vec2::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            if (p - m).norm() >= r_inner {
                pts.push(p);
            }
        }
    }
    pts
}

/// Sweep results for the Jacobian floor and the coercivity constant of `D0`.
#[derive(Debug, Clone, Copy)]
pub struct TensorFloorSweep {
    pub min_jacobian: f64,
    pub min_d0_eigenvalue: f64,
}

/// Minimum of `J` and of the smallest eigenvalue of `D0` over a sample grid
/// of `Y*` and a grid of radii in `[r_min, r_max]`.
pub fn tensor_floor_sweep(
    r_min: f64,
    r_max: f64,
    diffusion: Mat2,
    n_radii: usize,
    grid_n: usize,
) -> Result<TensorFloorSweep> {
    let mut min_j = f64::INFINITY;
    let mut min_eig = f64::INFINITY;
    for k in 0..n_radii {
        let r = if n_radii == 1 {
            r_min
        } else {
            r_min + (r_max - r_min) * k as f64 / (n_radii - 1) as f64
        };
        let t = CellTransform::new(r, r_min, r_max, diffusion)?;
        for p in cell_sample_grid(grid_n, r_max) {
            let s = t.tensors_at(p)?;
            min_j = min_j.min(s.j);
            min_eig = min_eig.min(s.d0.sym_eigenvalues().0);
        }
    }
    Ok(TensorFloorSweep {
        min_jacobian: min_j,
        min_d0_eigenvalue: min_eig,
    })
}
