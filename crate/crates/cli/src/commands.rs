use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use graphwave::format::{self, Conditions, GraphFile};
use graphwave::geometry::{ball, critical_times, distance, BoundaryKind};
use graphwave::linalg::{self, c};
use graphwave::spectral::{self, eigenvalues, Orders, ScanOptions, Wavenumber};
use graphwave::vertex::{local_decompose, validate_bc};
use graphwave::wave::{self, discretize, energy_global, fps_verify, FpsOptions, GridOptions, Solver};
use graphwave::{GraphPoint, MetricGraph, ValidatedSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::data::cauchy;
use crate::failure::Failure;
use crate::{DataArgs, GraphArg, GridArgs};

const FORMAT: u32 = 1;

fn load(arg: &GraphArg) -> Result<GraphFile, Failure> {
    let path = arg.file();
    format::read(path).map_err(|e| match e {
        format::FormatError::Io(io) => Failure::Usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn validated(file: &GraphFile) -> Result<ValidatedSpec, Failure> {
    Ok(validate_bc(&file.spec()?)?)
}

fn point(g: &MetricGraph, s: &str) -> Result<GraphPoint, Failure> {
    g.parse_point(s).map_err(|e| Failure::Usage(format!("bad point `{s}`: {e}")))
}

fn point_json(g: &MetricGraph, p: GraphPoint) -> Value {
    json!({ "edge": g.edge(p.edge()).name, "x": p.x() })
}

fn check_grid(grid: &GridArgs, default_h: f64) -> Result<f64, Failure> {
    let h = grid.h.unwrap_or(default_h);
    if !(h > 0.0) {
        return Err(Failure::Usage(format!("--h must be positive, got {h}")));
    }
    if !(grid.cfl > 0.0 && grid.cfl <= 1.0) {
        return Err(Failure::Usage(format!("--cfl must lie in (0, 1], got {}", grid.cfl)));
    }
    if let Some(r) = grid.region {
        if !(r >= 0.0) {
            return Err(Failure::Usage(format!("--region must be nonnegative, got {r}")));
        }
    }
    Ok(h)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn wavenumber(k: Wavenumber) -> String {
    match k {
        Wavenumber::Real(k) => format!("{k}"),
        Wavenumber::Imaginary(kappa) => format!("{kappa}i"),
    }
}

pub fn validate(arg: &GraphArg) -> Result<(), Failure> {
    let file = load(arg)?;
    let g = &file.graph;
    let spec = validated(&file)?;
    let vertices: Vec<Value> = g
        .vertices()
        .map(|v| json!({ "name": g.vertex_name(v), "degree": g.degree(v) }))
        .collect();
    let degrees: Vec<usize> = g.vertices().map(|v| g.degree(v)).collect();
    let out = json!({
        "format": FORMAT,
        "vertices": vertices,
        "degrees": degrees,
        "internal": g.internal_count(),
        "external": g.external_count(),
        "compact": g.is_compact(),
        "internal_length": g.internal_length(),
        "conditions": match file.conditions {
            Conditions::PerVertex(_) => "per-vertex",
            Conditions::Global(_) => "global",
        },
        "trace_dim": spec.dim(),
    });
    println!("{out}");
    Ok(())
}

pub fn geometry(arg: &GraphArg, p: &str, list: bool, radii: &[f64], to: &[String]) -> Result<(), Failure> {
    let file = load(arg)?;
    let g = &file.graph;
    let p = point(g, p)?;
    let ct = critical_times(g, p);
    if list {
        println!("{:?}", ct.values());
        return Ok(());
    }
    if radii.is_empty() && to.is_empty() {
        for t in &ct.times {
            let hits: Vec<&str> = t.vertex_hits.iter().map(|&v| g.vertex_name(v)).collect();
            let coin: Vec<&str> = t.coincidences.iter().map(|&e| g.edge(e).name.as_str()).collect();
            println!(
                "{}",
                json!({ "format": FORMAT, "critical_time": t.t, "vertices": hits, "coincidences": coin })
            );
        }
    }
    for &r in radii {
        let b = ball(g, p, r).map_err(|e| Failure::Usage(e.to_string()))?;
        let boundary: Vec<Value> = b
            .boundary
            .iter()
            .map(|bp| {
                let kind = match bp.kind {
                    BoundaryKind::Regular => "regular",
                    BoundaryKind::Vertex => "vertex",
                    BoundaryKind::Coincidence => "coincidence",
                };
                let mut v = point_json(g, bp.point);
                v["kind"] = json!(kind);
                v["inward"] = json!(bp.inward);
                v
            })
            .collect();
        let vertices: Vec<&str> = b.vertices.iter().map(|&v| g.vertex_name(v)).collect();
        let critical = ct.values().iter().any(|&t| (t - r).abs() <= 1e-12 * (1.0 + t));
        println!(
            "{}",
            json!({
                "format": FORMAT,
                "radius": r,
                "volume": b.volume(),
                "n_boundary": boundary.len(),
                "critical": critical,
                "boundary": boundary,
                "vertices": vertices,
            })
        );
    }
    for q in to {
        let qp = point(g, q)?;
        println!("{}", json!({ "format": FORMAT, "to": q, "distance": distance(g, p, qp) }));
    }
    Ok(())
}

pub fn bc_check(arg: &GraphArg) -> Result<(), Failure> {
    let file = load(arg)?;
    let g = &file.graph;
    let spec = validated(&file)?;
    let local = local_decompose(g, &spec).ok();
    let vertices: Option<Vec<Value>> = local.as_ref().map(|l| {
        l.blocks
            .iter()
            .map(|b| {
                let min = linalg::min_eigenvalue(&b.omega);
                json!({
                    "name": g.vertex_name(b.vertex),
                    "omega_min_eigenvalue": min,
                    "omega_psd": min >= -1e-10,
                })
            })
            .collect()
    });
    let out = json!({
        "format": FORMAT,
        "dim": spec.dim(),
        "rank": spec.rank,
        "hermitian_defect": spec.hermitian_defect,
        "maximal_isotropic": spec.oracle.maximal_isotropic(spec.dim()),
        "real": spec.is_real(),
        "omega_min_eigenvalue": spec.omega_min_eigenvalue(),
        "omega_psd": spec.omega_psd(1e-10),
        "local": local.is_some(),
        "continuity": wave::enforces_continuity(g, &spec),
        "vertices": vertices,
    });
    println!("{out}");
    Ok(())
}

pub fn spectrum(arg: &GraphArg, k_max: f64, out: Option<&Path>) -> Result<(), Failure> {
    if !(k_max >= 0.0) {
        return Err(Failure::Usage(format!("--k-max must be nonnegative, got {k_max}")));
    }
    let file = load(arg)?;
    let g = &file.graph;
    let spec = validated(&file)?;
    let basis = eigenvalues(g, &spec, ScanOptions { k_max, ..Default::default() })?;

    let mut rows: Vec<(Wavenumber, f64, usize, f64)> = Vec::new();
    for p in &basis.pairs {
        match rows.last_mut() {
            Some(last) if last.1 == p.lambda() => last.3 = last.3.max(p.residual),
            _ => rows.push((p.k, p.lambda(), p.multiplicity, p.residual)),
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "lambda", "multiplicity", "residual"])?;
    for (k, lambda, m, res) in &rows {
        w.write_record([wavenumber(*k), lambda.to_string(), m.to_string(), format!("{res:e}")])?;
    }
    let table = w.into_inner().map_err(|e| Failure::Validation(e.to_string()))?;

    let Some(dir) = out else {
        print!("{}", String::from_utf8_lossy(&table));
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("spectrum.csv"), &table)?;
    let internal: Vec<&str> = g.internal_edges().map(|e| g.edge(e).name.as_str()).collect();
    let pairs: Vec<Value> = basis
        .pairs
        .iter()
        .map(|p| {
            let edges: Vec<Value> = p
                .cos_sin_coeffs()
                .iter()
                .zip(&internal)
                .map(|((a, b), name)| json!({ "edge": name, "cos": [a.re, a.im], "sin": [b.re, b.im] }))
                .collect();
            json!({
                "k": wavenumber(p.k),
                "lambda": p.lambda(),
                "multiplicity": p.multiplicity,
                "residual": p.residual,
                "edges": edges,
            })
        })
        .collect();
    let report = json!({
        "format": FORMAT,
        "k_max": basis.k_max,
        "kappa_max": basis.kappa_max,
        "gram_defect": basis.gram_defect,
        "count": basis.len(),
        "eigenfunctions": pairs,
    });
    write_json(&dir.join("eigenfunctions.json"), &report)?;
    println!(
        "{}",
        json!({ "format": FORMAT, "eigenvalues": basis.len(), "distinct": rows.len(), "gram_defect": basis.gram_defect })
    );
    Ok(())
}

pub fn simulate(
    arg: &GraphArg,
    grid_args: &GridArgs,
    data_args: &DataArgs,
    t_end: f64,
    snapshots: usize,
    out: &Path,
) -> Result<(), Failure> {
    let h = check_grid(grid_args, 5e-3)?;
    if !(t_end >= 0.0) {
        return Err(Failure::Usage(format!("--t-end must be nonnegative, got {t_end}")));
    }
    let file = load(arg)?;
    let g = &file.graph;
    let spec = validated(&file)?;
    spec.require_real()?;
    let data = cauchy(g, &spec, data_args)?;
    let region = grid_args.region.unwrap_or(data.extent);
    let grid = discretize(g, &GridOptions::new(h, grid_args.cfl, t_end, region))?;
    let solver = Solver::new(g, &spec, grid)?;
    let steps = solver.grid.steps;

    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let wanted: BTreeSet<usize> = if snapshots == 0 {
        BTreeSet::new()
    } else {
        (0..=snapshots).map(|k| k * steps / snapshots).collect()
    };
    let mut energy = csv::Writer::from_path(out.join("energy.csv"))?;
    energy.write_record(["t", "E", "kinetic", "gradient", "vertex"])?;

    let mut failed: Option<Failure> = None;
    let mut e0: Option<f64> = None;
    let mut e_last = 0.0;
    let mut drift: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let state = solver.start(&*data.psi0, &*data.psi_dot0);
    solver.run(state, steps, |f| {
        if failed.is_some() {
            return;
        }
        let e = energy_global(&solver, f);
        let base = *e0.get_or_insert(e.total);
        e_last = e.total;
        if base > 0.0 {
            drift = drift.max((e.total - base).abs() / base);
        }
        residual = residual.max(solver.vertex_residual(f.cur));
        let row = [e.t, e.total, e.kinetic, e.gradient, e.vertex].map(|v| v.to_string());
        if let Err(err) = energy.write_record(&row) {
            failed = Some(err.into());
            return;
        }
        if wanted.contains(&f.step) {
            if let Err(err) = write_snapshot(&solver, f.cur, &snap_dir.join(format!("step_{:06}.csv", f.step))) {
                failed = Some(err);
            }
        }
    });
    if let Some(f) = failed {
        return Err(f);
    }
    energy.flush()?;

    let report = json!({
        "format": FORMAT,
        "h": h,
        "cfl": solver.grid.cfl,
        "dt": solver.grid.dt,
        "steps": steps,
        "t_end": t_end,
        "region": region,
        "nodes": solver.grid.node_count(),
        "seed": data_args.seed,
        "bumps": data_args.bumps,
        "e0": e0.unwrap_or(0.0),
        "e_final": e_last,
        "max_relative_drift": drift,
        "max_vertex_residual": residual,
        "snapshots": wanted.iter().collect::<Vec<_>>(),
    });
    write_json(&out.join("simulate.json"), &report)?;
    println!(
        "{}",
        json!({ "format": FORMAT, "steps": steps, "max_relative_drift": drift, "max_vertex_residual": residual })
    );
    Ok(())
}

fn write_snapshot(solver: &Solver<'_>, u: &wave::Field, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["edge", "x", "u"])?;
    for eg in &solver.grid.edges {
        let name = &solver.graph.edge(eg.edge).name;
        for (j, v) in u[eg.edge.0].iter().enumerate() {
            w.write_record([name.clone(), eg.x(j).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fps_check(
    arg: &GraphArg,
    grid_args: &GridArgs,
    data_args: &DataArgs,
    p: &str,
    t0: f64,
    out: &Path,
) -> Result<(), Failure> {
    let h = check_grid(grid_args, 1e-3)?;
    if !(t0 > 0.0) {
        return Err(Failure::Usage(format!("--t0 must be positive, got {t0}")));
    }
    let file = load(arg)?;
    let g = &file.graph;
    let p = point(g, p)?;
    let spec = validated(&file)?;
    spec.require_real()?;
    let data = cauchy(g, &spec, data_args)?;
    let region = grid_args.region.unwrap_or(data.extent.max(t0));
    let grid = discretize(g, &GridOptions::new(h, grid_args.cfl, t0 + 0.01, region))?;
    let solver = Solver::new(g, &spec, grid)?;
    let rep = fps_verify(&solver, &*data.psi0, &*data.psi_dot0, p, &FpsOptions::new(t0))?;

    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("local_energy.csv"))?;
    w.write_record(["t", "e", "kinetic", "gradient", "vertex", "ball_volume", "n_boundary", "excluded"])?;
    for s in &rep.samples {
        w.write_record([
            s.t.to_string(),
            s.e.to_string(),
            s.kinetic.to_string(),
            s.gradient.to_string(),
            s.vertex.to_string(),
            s.ball_volume.to_string(),
            s.n_boundary.to_string(),
            s.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    let mut report = serde_json::to_value(&rep)?;
    report["passed"] = json!(rep.passed());
    write_json(&out.join("fps_report.json"), &report)?;
    println!(
        "{}",
        json!({
            "format": FORMAT,
            "passed": rep.passed(),
            "e0": rep.e0,
            "cone_max": rep.cone_max,
            "data_vanish": rep.data_vanish,
            "critical_instants": rep.critical_instants,
        })
    );
    rep.verdict()?;
    Ok(())
}

pub fn estimates(arg: &GraphArg, k_max: f64, seed: u64, times: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    if !(k_max >= 0.0) {
        return Err(Failure::Usage(format!("--k-max must be nonnegative, got {k_max}")));
    }
    let file = load(arg)?;
    let g = &file.graph;
    let spec = validated(&file)?;
    let basis = eigenvalues(g, &spec, ScanOptions { k_max, ..Default::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c0 = vec![c(0.0); basis.len()];
    let mut d0 = vec![c(0.0); basis.len()];
    for (i, p) in basis.pairs.iter().enumerate() {
        let w = 1.0 / (1.0 + p.lambda().abs()).powi(2);
        c0[i] = c(rng.gen_range(-1.0..1.0) * w);
        d0[i] = c(rng.gen_range(-1.0..1.0) * w);
    }
    let psd = spec.omega_psd(1e-10);
    let rep = spectral::estimates(&basis, &c0, &d0, times, Orders::default(), psd);
    let violations = rep.violations().count();
    let summary = json!({
        "format": FORMAT,
        "modes": basis.len(),
        "epsilon": rep.epsilon,
        "omega_psd": psd,
        "checks": rep.checks.len(),
        "violations": violations,
        "min_relative_slack": rep.min_relative_slack(),
    });
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut full = summary.clone();
        full["seed"] = json!(seed);
        full["times"] = json!(times);
        full["m2"] = json!(rep.m2);
        full["inequalities"] = serde_json::to_value(&rep.checks)?;
        write_json(&dir.join("estimates.json"), &full)?;
    }
    println!("{summary}");
    if let Some(v) = rep.violations().next() {
        return Err(Failure::Property(format!(
            "estimate {} violated at t = {}: slack {:e}",
            v.name, v.t1, v.slack
        )));
    }
    Ok(())
}
