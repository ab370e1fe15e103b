use serde::Serialize;

use super::{boundary_flux, Field, LocalEnergy, LocalEnergySample, Solver, WaveError};
use crate::fields::GraphField;
use crate::geometry::{self, critical_times};
use crate::graph::GraphPoint;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FpsOptions {
    pub t0: f64,
    /// Samples averaged on each side of a critical instant.
    pub plateau: usize,
    /// Relative slack in units of `e(0)`.
    pub monotone_slack: f64,
    /// Cone leak bound relative to `‖ψ0‖∞`, checked when the data vanish
    /// on `B(p, t0)`.
    pub leak_limit: f64,
}

impl FpsOptions {
    pub fn new(t0: f64) -> Self {
        FpsOptions {
            t0,
            plateau: 3,
            monotone_slack: 1e-6,
            leak_limit: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JumpRecord {
    /// Instant `t0 − τ` with `τ ∈ T(p)`.
    pub t: f64,
    pub left: f64,
    pub right: f64,
    pub ok: bool,
    /// Change of the kinetic + gradient part across the instant.
    pub integral_jump: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FpsReport {
    pub format: u32,
    pub p: String,
    pub t0: f64,
    pub h: f64,
    pub dt: f64,
    pub critical_radii: Vec<f64>,
    pub critical_instants: Vec<f64>,
    pub e0: f64,
    pub min_e: f64,
    pub nonnegative: bool,
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub jumps: Vec<JumpRecord>,
    pub data_vanish: bool,
    pub cone_max: f64,
    pub psi0_sup: f64,
    pub leak_limit: f64,
    pub rate_max_error: f64,
    pub rate_scale: f64,
    pub rate_ok: bool,
    pub max_vertex_residual: f64,
    #[serde(skip)]
    pub samples: Vec<LocalEnergySample>,
}

impl FpsReport {
    /// The first violated property, if any.
    pub fn verdict(&self) -> Result<(), WaveError> {
        if !self.nonnegative {
            return Err(WaveError::MonotonicityViolated {
                t: f64::NAN,
                increase: self.min_e,
            });
        }
        if let Some(&(t, inc)) = self.monotonicity_violations.first() {
            return Err(WaveError::MonotonicityViolated { t, increase: inc });
        }
        if let Some(j) = self.jumps.iter().find(|j| !j.ok) {
            return Err(WaveError::JumpSignViolated {
                t: j.t,
                jump: j.right - j.left,
            });
        }
        let limit = self.leak_limit * self.psi0_sup;
        if self.data_vanish && self.cone_max > limit {
            return Err(WaveError::ConeLeakExcessive {
                leak: self.cone_max,
                limit,
            });
        }
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.verdict().is_ok()
    }
}

/// Simulate from `(ψ0, ψ̇0)` up to `t0` and check the local energy and the
/// cone `C(p, t0)`. The solver grid must reach at least `t0`.
pub fn fps_verify(
    solver: &Solver<'_>,
    psi0: &dyn GraphField,
    psi_dot0: &dyn GraphField,
    p: GraphPoint,
    opts: &FpsOptions,
) -> Result<FpsReport, WaveError> {
    let g = solver.graph;
    let t0 = opts.t0;
    let dt = solver.grid.dt;
    let mut local = LocalEnergy::new(solver, p, t0)?;
    let crit = critical_times(g, p);
    let radii: Vec<f64> = crit.values();
    let instants: Vec<f64> = radii.iter().map(|r| t0 - r).filter(|&t| t > 0.0 && t < t0).collect();
    let delta = 2.0 * dt;
    let steps = ((t0 / dt) * (1.0 + 1e-12)).floor() as usize;

    // Distances of all nodes from p, for the cone test.
    let df = geometry::vertex_distances(g, p);
    let dist: Field = solver
        .grid
        .edges
        .iter()
        .map(|eg| (0..eg.nodes()).map(|j| df.at(eg.edge, eg.x(j))).collect())
        .collect();

    let start = solver.start(psi0, psi_dot0);
    let v0 = solver.grid.sample(psi_dot0);
    let mut data_vanish = true;
    let mut psi0_sup: f64 = 0.0;
    for (e, col) in start.u.iter().enumerate() {
        for (j, &x) in col.iter().enumerate() {
            psi0_sup = psi0_sup.max(x.abs());
            if dist[e][j] <= t0 && (x != 0.0 || v0[e][j] != 0.0) {
                data_vanish = false;
            }
        }
    }

    let mut samples: Vec<LocalEnergySample> = Vec::with_capacity(steps + 1);
    let mut flux: Vec<Option<f64>> = Vec::with_capacity(steps + 1);
    let mut cone_max: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    let mut err: Option<WaveError> = None;
    solver.run(start, steps, |frame| {
        if err.is_some() {
            return;
        }
        let t = frame.t;
        max_res = max_res.max(solver.vertex_residual(frame.cur));
        let r = t0 - t;
        for (e, col) in frame.cur.iter().enumerate() {
            for (j, &x) in col.iter().enumerate() {
                if dist[e][j] <= r {
                    cone_max = cone_max.max(x.abs());
                }
            }
        }
        if t + 0.5 * dt > t0 + 1e-12 {
            return;
        }
        match local.sample(frame) {
            Ok(mut s) => {
                s.excluded = instants.iter().any(|&c| (s.t - c).abs() <= delta) || t0 - s.t <= delta;
                let f = if s.excluded {
                    None
                } else {
                    local
                        .ball(s.t)
                        .ok()
                        .and_then(|b| boundary_flux(solver, frame, &b).ok())
                };
                flux.push(f);
                samples.push(s);
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    let e0 = samples.first().map(|s| s.e).unwrap_or(0.0);
    let tol = opts.monotone_slack * e0 + 1e-12;
    let min_e = samples.iter().map(|s| s.e).fold(f64::INFINITY, f64::min);
    let nonnegative = min_e >= -tol;
    let segment = |t: f64| instants.iter().filter(|&&c| c < t).count();

    let kept: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].excluded).collect();
    let mut violations = Vec::new();
    for w in kept.windows(2) {
        let (a, b) = (&samples[w[0]], &samples[w[1]]);
        if segment(a.t) != segment(b.t) {
            continue;
        }
        if b.e > a.e + tol {
            violations.push((b.t, b.e - a.e));
        }
    }

    let mut jumps = Vec::new();
    for &c in &instants {
        let left: Vec<&LocalEnergySample> = kept
            .iter()
            .map(|&i| &samples[i])
            .filter(|s| s.t < c)
            .collect();
        let right: Vec<&LocalEnergySample> = kept
            .iter()
            .map(|&i| &samples[i])
            .filter(|s| s.t > c)
            .collect();
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let l = &left[left.len().saturating_sub(opts.plateau)..];
        let r = &right[..opts.plateau.min(right.len())];
        let mean = |v: &[&LocalEnergySample], f: fn(&LocalEnergySample) -> f64| {
            v.iter().map(|s| f(s)).sum::<f64>() / v.len() as f64
        };
        let le = mean(l, |s| s.e);
        let re = mean(r, |s| s.e);
        let li = mean(l, |s| s.kinetic + s.gradient);
        let ri = mean(r, |s| s.kinetic + s.gradient);
        jumps.push(JumpRecord {
            t: c,
            left: le,
            right: re,
            ok: le >= re - tol,
            integral_jump: ri - li,
        });
    }

    // Rate identity at interior samples of each segment.
    let mut rate_err: f64 = 0.0;
    let mut rate_scale: f64 = 0.0;
    for i in 1..samples.len().saturating_sub(1) {
        let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
        if a.excluded || b.excluded || c.excluded || segment(a.t) != segment(c.t) {
            continue;
        }
        if let Some(f) = flux[i] {
            let de = (c.e - a.e) / (2.0 * dt);
            rate_err = rate_err.max((de - f).abs());
            rate_scale = rate_scale.max(f.abs());
        }
    }
    let h = solver.grid.h_max();
    let rate_ok = rate_err <= 50.0 * h * (rate_scale + e0) + 1e-12;

    Ok(FpsReport {
        format: 1,
        p: p.to_string(),
        t0,
        h,
        dt,
        critical_radii: radii,
        critical_instants: instants,
        e0,
        min_e,
        nonnegative,
        monotonicity_violations: violations,
        jumps,
        data_vanish,
        cone_max,
        psi0_sup,
        leak_limit: opts.leak_limit,
        rate_max_error: rate_err,
        rate_scale,
        rate_ok,
        max_vertex_residual: max_res,
        samples,
    })
}
