//! Tabulated effective coefficients over the radius range, with
//! shape-preserving interpolation and a content-addressed disk cache.
//!
//! Porosity and its radius derivative are always evaluated from the closed
//! forms; only the homogenised diffusivity and permeability come from cell
//! solves. Samples are Chebyshev-Lobatto points in `[R_min, R_max]`, so both
//! endpoints are included and interpolation never extrapolates.

use crate::cell::{
    scalar_reduction, solve_diffusion_cell, solve_stokes_cell, Formulation,
};
use crate::error::{Error, Result};
use crate::geometry::{porosity_of_radius, CellTransform};
use crate::la::Mat2;
use crate::mesh::{gen_cell_mesh, map_mesh};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything the table depends on.
#[derive(Debug, Clone)]
pub struct MicrostructureParams {
    pub r_min: f64,
    pub r_max: f64,
    pub diffusion: Mat2,
    pub n_samples: usize,
    pub cell_resolution: usize,
    pub formulation: Formulation,
}

impl MicrostructureParams {
    /// Canonical content hash of the parameters.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        let d = &self.diffusion.m;
        let key = format!(
            "poroscale-table-v1|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{}|{}|{}",
            self.r_min,
            self.r_max,
            d[0][0],
            d[0][1],
            d[1][0],
            d[1][1],
            self.n_samples,
            self.cell_resolution,
            self.formulation
        );
        hasher.update(key.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Chebyshev-Lobatto sample radii, endpoints included, ascending.
    pub fn sample_radii(&self) -> Vec<f64> {
        let n = self.n_samples;
        (0..n)
            .map(|j| {
                let x = (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos();
                self.r_min + (self.r_max - self.r_min) * (1.0 - x) / 2.0
            })
            .collect()
    }
}

/// One table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub r: f64,
    pub theta: f64,
    pub dstar: f64,
    pub kstar: f64,
    pub aniso_d: f64,
    pub aniso_k: f64,
}

/// Per-sample solver diagnostics kept alongside the table.
#[derive(Debug, Clone, Copy)]
pub struct SampleDiagnostics {
    pub r: f64,
    /// Relative gap between the flux and energy permeability formulas.
    pub dual_gap_k: f64,
    /// Weak divergence-constraint residual of the Stokes solves.
    pub div_residual: f64,
    pub solver_residual: f64,
    pub dstar: Mat2,
    pub kstar: Mat2,
}

/// Sampled map `R -> (theta, d*, k*)` plus anisotropy residuals.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub rows: Vec<TableRow>,
    pub params: MicrostructureParams,
    pub content_hash: String,
}

impl CoefficientTable {
    /// Structural invariants: analytic porosity column, strict monotonicity
    /// of the homogenised coefficients in the radius.
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::Table("table needs at least two rows".into()));
        }
        for row in &self.rows {
            let p = porosity_of_radius(row.r);
            if (row.theta - p.theta).abs() > 1e-12 {
                return Err(Error::Table(format!(
                    "porosity column deviates from closed form at R = {}",
                    row.r
                )));
            }
        }
        for w in self.rows.windows(2) {
            if w[1].r <= w[0].r {
                return Err(Error::Table("sample radii not strictly increasing".into()));
            }
            if w[1].dstar >= w[0].dstar || w[1].kstar >= w[0].kstar {
                return Err(Error::Table(format!(
                    "effective coefficients not strictly decreasing between R = {} and R = {}",
                    w[0].r, w[1].r
                )));
            }
        }
        Ok(())
    }

    pub fn r_min(&self) -> f64 {
        self.params.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.params.r_max
    }

    /// Interpolated coefficients at a radius. Porosity and its derivative
    /// come from the closed forms; `d*` and `k*` from monotone cubic
    /// (Fritsch-Carlson) interpolation of the samples.
    pub fn interpolate(&self, r: f64) -> Result<CoefficientsAt> {
        if r < self.r_min() - 1e-12 || r > self.r_max() + 1e-12 {
            return Err(Error::Table(format!(
                "radius {r} outside table range [{}, {}]",
                self.r_min(),
                self.r_max()
            )));
        }
        let r = r.clamp(self.r_min(), self.r_max());
        let xs: Vec<f64> = self.rows.iter().map(|row| row.r).collect();
        let ds: Vec<f64> = self.rows.iter().map(|row| row.dstar).collect();
        let ks: Vec<f64> = self.rows.iter().map(|row| row.kstar).collect();
        let p = porosity_of_radius(r);
        Ok(CoefficientsAt {
            theta: p.theta,
            dtheta_dr: p.dtheta_dr,
            dstar: pchip_eval(&xs, &ds, r),
            kstar: pchip_eval(&xs, &ks, r),
        })
    }

    /// Serialize to the cache CSV format.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "# poroscale {} config={}\n",
            TOOL_VERSION, self.content_hash
        ));
        s.push_str("R,theta,dstar,kstar,aniso_d,aniso_k\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.r, row.theta, row.dstar, row.kstar, row.aniso_d, row.aniso_k
            ));
        }
        s
    }

    pub fn from_csv(text: &str, params: &MicrostructureParams) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('R') {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Table(format!("bad row: {line}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 6 {
                return Err(Error::Table(format!("bad column count in row: {line}")));
            }
            rows.push(TableRow {
                r: vals[0],
                theta: vals[1],
                dstar: vals[2],
                kstar: vals[3],
                aniso_d: vals[4],
                aniso_k: vals[5],
            });
        }
        let table = CoefficientTable {
            rows,
            params: params.clone(),
            content_hash: params.content_hash(),
        };
        table.validate()?;
        Ok(table)
    }
}

/// Interpolated values at one radius.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientsAt {
    pub theta: f64,
    pub dtheta_dr: f64,
    pub dstar: f64,
    pub kstar: f64,
}

/// Fritsch-Carlson monotone cubic interpolation; for monotone data the
/// interpolant stays within each bracketing sample pair.
pub fn pchip_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 2);
    let slopes = pchip_slopes(xs, ys);
    // bracketing interval
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(k) => return ys[k],
        Err(k) => k.clamp(1, n - 1) - 1,
    };
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[i] + h10 * h * slopes[i] + h01 * ys[i + 1] + h11 * h * slopes[i + 1]
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
    m[n - 1] = endpoint_slope(
        h[n - 2],
        if n >= 3 { h[n - 3] } else { h[n - 2] },
        delta[n - 2],
        if n >= 3 { delta[n - 3] } else { delta[n - 2] },
    );
    m
}

fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Build the coefficient table by running both cell problems at every sample
/// radius, in parallel over samples. Uses a disk cache keyed by the content
/// hash when `cache_dir` is given.
pub fn build_table(
    params: &MicrostructureParams,
    cache_dir: Option<&Path>,
    tol: f64,
) -> Result<(CoefficientTable, Vec<SampleDiagnostics>)> {
    if params.n_samples < 4 {
        return Err(Error::Table("table needs at least 4 samples".into()));
    }
    if !(0.0 < params.r_min && params.r_min < params.r_max && params.r_max < 0.5) {
        return Err(Error::Table(format!(
            "radius range requires 0 < R_min < R_max < 0.5, got [{}, {}]",
            params.r_min, params.r_max
        )));
    }
    if let Some(dir) = cache_dir {
        if let Some(table) = try_cache_load(params, dir) {
            return Ok((table, Vec::new()));
        }
    }
    let reference = Arc::new(gen_cell_mesh(params.r_max, params.cell_resolution)?);
    let radii = params.sample_radii();
    let results: Vec<Result<(TableRow, SampleDiagnostics)>> = radii
        .par_iter()
        .map(|&r| build_sample(params, &reference, r, tol))
        .collect();
    let mut rows = Vec::with_capacity(radii.len());
    let mut diags = Vec::with_capacity(radii.len());
    for res in results {
        let (row, d) = res?;
        rows.push(row);
        diags.push(d);
    }
    let table = CoefficientTable {
        rows,
        params: params.clone(),
        content_hash: params.content_hash(),
    };
    table.validate()?;
    if let Some(dir) = cache_dir {
        cache_store(&table, dir)?;
    }
    Ok((table, diags))
}

fn build_sample(
    params: &MicrostructureParams,
    reference: &Arc<crate::mesh::PeriodicMesh>,
    r: f64,
    tol: f64,
) -> Result<(TableRow, SampleDiagnostics)> {
    let transform = CellTransform::new(r, params.r_min, params.r_max, params.diffusion)?;
    let mesh = match params.formulation {
        Formulation::Fixed => reference.clone(),
        Formulation::Moving => Arc::new(map_mesh(reference, &transform)?),
    };
    let diff = solve_diffusion_cell(&transform, &mesh, params.formulation, tol)?;
    let stokes = solve_stokes_cell(&transform, &mesh, params.formulation, tol)?;
    let (dbar, aniso_d) = scalar_reduction(&diff.dstar);
    let kstar = stokes.kstar_flux.sym();
    let (kbar, aniso_k) = scalar_reduction(&kstar);
    let dual_gap_k = stokes
        .kstar_flux
        .sub_mat(&stokes.kstar_energy)
        .frob_norm()
        / stokes.kstar_energy.frob_norm();
    let row = TableRow {
        r,
        theta: porosity_of_radius(r).theta,
        dstar: dbar,
        kstar: kbar,
        aniso_d,
        aniso_k,
    };
    let diag = SampleDiagnostics {
        r,
        dual_gap_k,
        div_residual: stokes.div_residual,
        solver_residual: stokes.solver_residual.max(diff.solver_residual),
        dstar: diff.dstar,
        kstar,
    };
    Ok((row, diag))
}

fn cache_paths(params: &MicrostructureParams, dir: &Path) -> (PathBuf, PathBuf) {
    let hash = params.content_hash();
    (
        dir.join(format!("table_{}.csv", &hash[..16])),
        dir.join(format!("table_{}.meta", &hash[..16])),
    )
}

fn try_cache_load(params: &MicrostructureParams, dir: &Path) -> Option<CoefficientTable> {
    let (csv_path, meta_path) = cache_paths(params, dir);
    let meta = std::fs::read_to_string(&meta_path).ok()?;
    let mut hash_ok = false;
    let mut fields_ok = 0usize;
    let expect_hash = params.content_hash();
    for line in meta.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        match k.trim() {
            "hash" => hash_ok = v.trim() == expect_hash,
            // full key comparison guards against truncated-hash collisions
            "r_min" => fields_ok += (v.trim() == format!("{:.17e}", params.r_min)) as usize,
            "r_max" => fields_ok += (v.trim() == format!("{:.17e}", params.r_max)) as usize,
            "n_samples" => fields_ok += (v.trim() == params.n_samples.to_string()) as usize,
            "cell_resolution" => {
                fields_ok += (v.trim() == params.cell_resolution.to_string()) as usize
            }
            "formulation" => fields_ok += (v.trim() == params.formulation.to_string()) as usize,
            _ => {}
        }
    }
    if !hash_ok || fields_ok != 5 {
        return None;
    }
    let text = std::fs::read_to_string(&csv_path).ok()?;
    let table = CoefficientTable::from_csv(&text, params).ok()?;
    (table.rows.len() == params.n_samples).then_some(table)
}

fn cache_store(table: &CoefficientTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (csv_path, meta_path) = cache_paths(&table.params, dir);
    let p = &table.params;
    let meta = format!(
        "hash={}\nversion={}\nr_min={:.17e}\nr_max={:.17e}\nd00={:.17e}\nd01={:.17e}\nd10={:.17e}\nd11={:.17e}\nn_samples={}\ncell_resolution={}\nformulation={}\n",
        table.content_hash,
        TOOL_VERSION,
        p.r_min,
        p.r_max,
        p.diffusion.m[0][0],
        p.diffusion.m[0][1],
        p.diffusion.m[1][0],
        p.diffusion.m[1][1],
        p.n_samples,
        p.cell_resolution,
        p.formulation
    );
    write_atomic(&csv_path, table.to_csv().as_bytes())?;
    write_atomic(&meta_path, meta.as_bytes())?;
    Ok(())
}

/// Write a file atomically: write to a sibling temp file, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
