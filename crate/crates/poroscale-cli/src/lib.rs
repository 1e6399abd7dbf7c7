//! Command implementations behind the `poroscale` binary: scenario
//! tabulation, coupled solves, the verification suite and
//! manufactured-solution convergence studies.
//!
//! Exit-code contract: 0 success, 1 configuration error, 2 solver error,
//! 3 verification failure.

use poroscale::config::ScenarioConfig;
use poroscale::macrosim::{run_simulation, ExtraSources, MacroState, RunSetup};
use poroscale::mesh::gen_macro_mesh;
use poroscale::mms;
use poroscale::output;
use poroscale::table::{build_table, write_atomic, CoefficientTable};
use poroscale::verify::{report_csv, run_verification, VerifyLevel, SOLVER_TOL};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable overriding the table cache directory.
pub const CACHE_DIR_ENV: &str = "POROSCALE_CACHE_DIR";

/// A command failure carrying the process exit code.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn solver(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_SOLVER,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn cache_dir(cfg: &ScenarioConfig) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(&cfg.output.dir).join("cache"))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::parse_file(path).map_err(Failure::config)
}

fn ensure_table(cfg: &ScenarioConfig, announce: bool) -> Result<(CoefficientTable, bool), Failure> {
    let params = cfg.table_params().map_err(Failure::config)?;
    let dir = cache_dir(cfg);
    let (table, diags) = build_table(&params, Some(&dir), SOLVER_TOL).map_err(Failure::solver)?;
    let cache_hit = diags.is_empty();
    if announce {
        if cache_hit {
            println!(
                "cache hit: table {} ({} samples) loaded from {}",
                &table.content_hash[..16],
                table.rows.len(),
                dir.display()
            );
        } else {
            for (row, d) in table.rows.iter().zip(&diags) {
                println!(
                    "sample R = {:.5}: theta = {:.6}, d* = {:.6e}, k* = {:.6e}, aniso_d = {:.2e}, aniso_k = {:.2e}, dual-K gap = {:.2e}",
                    row.r, row.theta, row.dstar, row.kstar, row.aniso_d, row.aniso_k, d.dual_gap_k
                );
            }
        }
    }
    Ok((table, cache_hit))
}

/// `tabulate <config>`: build (or load) the coefficient table and emit the
/// CSV plus its metadata sidecar.
pub fn cmd_tabulate(config_path: &Path) -> CmdResult {
    let cfg = load_config(config_path)?;
    let (table, _) = ensure_table(&cfg, true)?;
    let dir = cache_dir(&cfg);
    println!(
        "table artifacts: {} (+ .meta)",
        dir.join(format!("table_{}.csv", &table.content_hash[..16]))
            .display()
    );
    Ok(())
}

/// `solve <config>`: run the coupled simulation and write trajectory
/// artifacts.
pub fn cmd_solve(config_path: &Path) -> CmdResult {
    let cfg = load_config(config_path)?;
    let (table, _) = ensure_table(&cfg, false)?;
    let mesh = Arc::new(
        gen_macro_mesh(cfg.rect(), cfg.macro_mesh.nx, cfg.macro_mesh.ny).map_err(Failure::config)?,
    );
    let physics = cfg.resolve_physics().map_err(Failure::config)?;
    let (u0, r0) = cfg.initial_fields(&mesh).map_err(Failure::config)?;
    let state = MacroState::new(&mesh, u0, r0);
    let setup = RunSetup {
        mesh: mesh.clone(),
        table: Arc::new(table),
        physics,
        r_bounds: (cfg.microstructure.r_min, cfg.microstructure.r_max),
        dt: cfg.time.dt,
        t_end: cfg.time.t_end,
        snapshot_every: cfg.time.snapshot_every,
        solver_tol: SOLVER_TOL,
        skip_radius_update: false,
        failure_dump: None,
    };
    let result = run_simulation(&setup, state, &ExtraSources::default()).map_err(Failure::solver)?;
    let out_dir = Path::new(&cfg.output.dir);
    let hash = cfg.content_hash();
    let want_vtk = cfg.output.formats.iter().any(|f| f == "vtk");
    for (i, snap) in result.snapshots.iter().enumerate() {
        output::write_snapshot(out_dir, &mesh, snap, i, &hash).map_err(Failure::solver)?;
        output::write_velocity(out_dir, &mesh, snap, i, &hash).map_err(Failure::solver)?;
        if want_vtk {
            output::write_vtk(out_dir, &mesh, snap, i, &hash).map_err(Failure::solver)?;
        }
    }
    output::write_diagnostics(out_dir, &result.diagnostics, &hash).map_err(Failure::solver)?;
    println!(
        "solve finished: {} steps, {} snapshots, max element Peclet {:.3}, {} radius clamps",
        result.diagnostics.len(),
        result.snapshots.len(),
        result.max_peclet,
        result.total_clamps
    );
    if result.max_peclet > 2.0 {
        eprintln!(
            "warning: element Peclet number {:.3} exceeds 2; the unstabilized advection \
             discretization may oscillate",
            result.max_peclet
        );
    }
    Ok(())
}

/// `verify [--full]`: run the property suite, write the report CSV, fail
/// with exit code 3 if any check fails.
pub fn cmd_verify(full: bool, report_path: &Path) -> CmdResult {
    let level = if full {
        VerifyLevel::Full
    } else {
        VerifyLevel::Fast
    };
    let rows = run_verification(level).map_err(Failure::solver)?;
    let csv = report_csv(&rows);
    write_atomic(report_path, csv.as_bytes()).map_err(Failure::solver)?;
    let mut failed = 0usize;
    for r in &rows {
        println!(
            "{:6} {:42} value = {:>12.4e}  threshold = {:>12.4e}",
            if r.pass { "pass" } else { "FAIL" },
            r.name,
            r.value,
            r.threshold
        );
        if !r.pass {
            failed += 1;
        }
    }
    println!("report written to {}", report_path.display());
    if failed > 0 {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{failed} verification check(s) failed"),
        })
    } else {
        Ok(())
    }
}

/// `mms <case>`: three-level refinement study with printed errors and
/// observed orders.
pub fn cmd_mms(case: &str) -> CmdResult {
    let table = mms::mms_table().map_err(Failure::solver)?;
    let report = match case {
        "darcy" => mms::mms_darcy(&table, &[8, 16, 32]).map_err(Failure::solver)?,
        "heat" => mms::mms_heat(&table, true, false).map_err(Failure::solver)?,
        "transport" => mms::mms_heat(&table, true, true).map_err(Failure::solver)?,
        "coupled" => mms::mms_coupled(&table).map_err(Failure::solver)?,
        other => {
            return Err(Failure::config(format!(
                "unknown mms case '{other}' (expected darcy | heat | transport | coupled)"
            )))
        }
    };
    println!("case {}", report.case);
    println!("{:>14} {:>14} {:>8}", "h or dt", "L2 error", "order");
    for (i, (param, err)) in report.levels.iter().enumerate() {
        if i == 0 {
            println!("{param:>14.6e} {err:>14.6e} {:>8}", "-");
        } else {
            println!(
                "{param:>14.6e} {err:>14.6e} {:>8.2}",
                report.orders[i - 1]
            );
        }
    }
    Ok(())
}
