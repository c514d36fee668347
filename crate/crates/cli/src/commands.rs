//! The subcommands. Each one resolves its query set, evaluates rows in a
//! work pool and writes them sorted by `(hbar, point index)`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wigner_airy::airy::{
    layer_geometry, predict_airy_layer, predict_nondegenerate, CalibrationRecord, ConventionLedger,
};
use wigner_airy::hk::{stationary_phase_prediction, wigner_propagator};
use wigner_airy::midpoint::{chord_area, dt_de, dt_de_jacobi, solve_midpoint_with};
use wigner_airy::quantum::{check_window_radius, EigenBasis, SpectralModel};
use wigner_airy::specfun::{build_window, SmoothWindow};
use wigner_airy::{flow, Potential};

use crate::config::{Query, Route, RunConfig};
use crate::error::CliError;
use crate::table::{fmt_f64, fmt_opt, point_columns, Table};

/// Settings shared by all subcommands.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub strict: bool,
    pub ledger: ConventionLedger,
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf, strict: bool) -> Result<Self, CliError> {
        let ledger = config.ledger()?;
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            config,
            out,
            strict,
            ledger,
        })
    }

    fn window(&self) -> Result<SmoothWindow, CliError> {
        let cfg = &self.config;
        if self.strict {
            check_window_radius(cfg.window.a, &cfg.potential, cfg.energy, &cfg.predictor.integrator)
                .map_err(|e| CliError::Config(format!("strict mode: {e}")))?;
        }
        Ok(build_window(cfg.window.a)?)
    }
}

fn point_fields(q: &Query) -> Vec<String> {
    q.point.q.iter().chain(&q.point.p).map(|v| fmt_f64(*v)).collect()
}

fn header(leading: &[&str], d: usize, trailing: &[&str]) -> Vec<String> {
    leading
        .iter()
        .map(|s| s.to_string())
        .chain(point_columns(d))
        .chain(trailing.iter().map(|s| s.to_string()))
        .collect()
}

fn status_of<T>(r: &Result<T, wigner_airy::Error>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    }
}

/// Flow of every query point over the configured times.
pub fn cmd_flow(ctx: &Context) -> Result<Table, CliError> {
    let cfg = &ctx.config;
    let d = cfg.dimension();
    let queries = cfg.queries(cfg.reference_hbar()?)?;
    let mut h = header(&["index", "t"], d, &[]);
    h.extend((0..d).map(|k| format!("q_t{k}")));
    h.extend((0..d).map(|k| format!("p_t{k}")));
    h.extend(
        [
            "action",
            "energy_drift",
            "symplectic_residual",
            "status",
            "convention_id",
        ]
        .map(String::from),
    );
    let mut table = Table::new(h);
    let tasks: Vec<(&Query, f64)> = queries
        .iter()
        .flat_map(|q| cfg.flow.times.iter().map(move |t| (q, *t)))
        .collect();
    let rows: Vec<Vec<String>> = tasks
        .par_iter()
        .map(|(q, t)| {
            let res = flow(&cfg.potential, &q.point, *t, &cfg.predictor.integrator);
            let mut row = vec![q.index.to_string(), fmt_f64(*t)];
            row.extend(point_fields(q));
            match &res {
                Ok(fr) => {
                    row.extend(fr.end.q.iter().chain(&fr.end.p).map(|v| fmt_f64(*v)));
                    row.extend([fr.action, fr.energy_drift, fr.symplectic_residual()].map(fmt_f64));
                }
                Err(_) => row.extend(std::iter::repeat_n(String::new(), 2 * d + 3)),
            }
            row.push(status_of(&res));
            row.push(ctx.ledger.id.clone());
            row
        })
        .collect();
    rows.into_iter().for_each(|r| table.push(r));
    table.write(&ctx.out.join("flow.csv"))?;
    Ok(table)
}

/// Critical time, base point and `dt/dE` of every query point.
pub fn cmd_midpoint(ctx: &Context) -> Result<Table, CliError> {
    let cfg = &ctx.config;
    let d = cfg.dimension();
    let queries = cfg.queries(cfg.reference_hbar()?)?;
    let mut h = header(&["index"], d, &["s", "t_plus"]);
    h.extend((0..d).map(|k| format!("base_q{k}")));
    h.extend((0..d).map(|k| format!("base_p{k}")));
    h.extend(
        [
            "dt_de",
            "dt_de_jacobi",
            "chord_area",
            "newton_residual",
            "status",
            "convention_id",
        ]
        .map(String::from),
    );
    let mut table = Table::new(h);
    let integ = &cfg.predictor.integrator;
    let rows: Vec<Vec<String>> = queries
        .par_iter()
        .map(|q| {
            let pot = &cfg.potential;
            let res = solve_midpoint_with(&q.point, cfg.energy, pot, integ, &cfg.predictor.solver).and_then(|sol| {
                let slope = dt_de(&sol, pot, integ)?;
                let jacobi = dt_de_jacobi(&sol, pot)?;
                let area = chord_area(&sol, pot, integ)?;
                Ok((sol, slope, jacobi, area))
            });
            let mut row = vec![q.index.to_string()];
            row.extend(point_fields(q));
            row.push(fmt_f64(q.s));
            match &res {
                Ok((sol, slope, jacobi, area)) => {
                    row.push(fmt_f64(sol.t_plus));
                    row.extend(sol.base.q.iter().chain(&sol.base.p).map(|v| fmt_f64(*v)));
                    row.extend([*slope, *jacobi, *area, sol.newton_residual].map(fmt_f64));
                }
                Err(_) => row.extend(std::iter::repeat_n(String::new(), 2 * d + 5)),
            }
            row.push(status_of(&res));
            row.push(ctx.ledger.id.clone());
            row
        })
        .collect();
    rows.into_iter().for_each(|r| table.push(r));
    table.write(&ctx.out.join("midpoint.csv"))?;
    Ok(table)
}

/// One prediction at one `(hbar, point)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictRow {
    pub hbar: f64,
    pub index: usize,
    pub point: Vec<f64>,
    pub s: f64,
    pub u: f64,
    pub rho: Option<f64>,
    pub mu: Option<f64>,
    pub u00: Option<f64>,
    pub predicted: Option<f64>,
    pub route: String,
    pub status: String,
}

fn predict_one(ctx: &Context, window: &SmoothWindow, hbar: f64, q: &Query, ledger: &ConventionLedger) -> PredictRow {
    let cfg = &ctx.config;
    let (pot, spec, e) = (&cfg.potential, &cfg.predictor, cfg.energy);
    let mut row = PredictRow {
        hbar,
        index: q.index,
        point: q.point.to_vec(),
        s: q.s,
        u: q.u,
        rho: None,
        mu: None,
        u00: None,
        predicted: None,
        route: "airy".into(),
        status: "ok".into(),
    };
    let route = match cfg.convention.route {
        Route::Airy => Route::Airy,
        Route::Nondegenerate => Route::Nondegenerate,
        Route::Auto => match layer_geometry(&q.point, e, pot, spec) {
            Ok(g) if g.rho / hbar.powf(2.0 / 3.0) >= spec.nondegenerate_threshold => Route::Nondegenerate,
            _ => Route::Airy,
        },
    };
    match route {
        Route::Nondegenerate => {
            row.route = "nondegenerate".into();
            match predict_nondegenerate(&q.point, e, hbar, window, pot, ledger, spec) {
                Ok(p) => {
                    row.rho = Some(p.scaled_rho * hbar.powf(2.0 / 3.0));
                    row.predicted = Some(p.value);
                }
                Err(err) => row.status = err.to_string(),
            }
        }
        _ => match predict_airy_layer(&q.point, e, hbar, pot, ledger, spec) {
            Ok(p) => {
                row.rho = Some(p.rho);
                row.mu = Some(p.mu);
                row.u00 = Some(p.u00);
                row.predicted = Some(p.value);
            }
            Err(err) => row.status = err.to_string(),
        },
    }
    row
}

/// Predictions over all `hbar` values and query points.
pub fn compute_predictions(ctx: &Context, ledger: &ConventionLedger) -> Result<Vec<PredictRow>, CliError> {
    let cfg = &ctx.config;
    let window = ctx.window()?;
    let mut tasks = Vec::new();
    for &hbar in cfg.require_hbars()? {
        for q in cfg.queries(hbar)? {
            tasks.push((hbar, q));
        }
    }
    Ok(tasks
        .par_iter()
        .map(|(h, q)| predict_one(ctx, &window, *h, q, ledger))
        .collect())
}

fn predict_table(d: usize, rows: &[PredictRow], ledger_id: &str) -> Table {
    let mut table = Table::new(header(
        &["hbar", "index"],
        d,
        &[
            "s",
            "u",
            "rho",
            "mu",
            "u00",
            "predicted",
            "route",
            "status",
            "convention_id",
        ],
    ));
    for r in rows {
        let mut row = vec![fmt_f64(r.hbar), r.index.to_string()];
        row.extend(r.point.iter().map(|v| fmt_f64(*v)));
        row.extend([
            fmt_f64(r.s),
            fmt_f64(r.u),
            fmt_opt(r.rho),
            fmt_opt(r.mu),
            fmt_opt(r.u00),
            fmt_opt(r.predicted),
        ]);
        row.extend([r.route.clone(), r.status.clone(), ledger_id.to_string()]);
        table.push(row);
    }
    table
}

pub fn cmd_predict(ctx: &Context) -> Result<Table, CliError> {
    let rows = compute_predictions(ctx, &ctx.ledger)?;
    let table = predict_table(ctx.config.dimension(), &rows, &ctx.ledger.id);
    table.write(&ctx.out.join("predict.csv"))?;
    Ok(table)
}

/// Exact reference values at one `(hbar, point)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactRow {
    pub hbar: f64,
    pub index: usize,
    pub point: Vec<f64>,
    pub s: f64,
    pub u: f64,
    pub smoothed: f64,
    pub sharp: Option<f64>,
}

fn basis_path(dir: &Path, hbar: f64, axis: usize) -> PathBuf {
    dir.join(format!("basis-h{hbar:e}-axis{axis}.json"))
}

fn has_closed_form(pot: &Potential) -> bool {
    matches!(pot, Potential::Isotropic { .. } | Potential::Anisotropic { .. })
}

/// Spectral model at one `hbar`. An eigenstate the grid cannot resolve makes
/// the reference unreliable, so that surfaces as a reliability failure.
fn spectral_model(ctx: &Context, hbar: f64, max_energy: f64) -> Result<SpectralModel, CliError> {
    let reference_err = |e: wigner_airy::Error| match e {
        wigner_airy::Error::Domain(msg) => CliError::Reliability(msg),
        other => other.into(),
    };
    let cfg = &ctx.config;
    let pot = &cfg.potential;
    let Some(dir) = cfg.exact.basis_dir.as_ref().filter(|_| !has_closed_form(pot)) else {
        return SpectralModel::build(pot, hbar, max_energy, &cfg.grid).map_err(reference_err);
    };
    let d = cfg.dimension();
    let paths: Vec<PathBuf> = (0..d).map(|k| basis_path(dir, hbar, k)).collect();
    if paths.iter().all(|p| p.exists()) {
        let mut bases = Vec::with_capacity(d);
        for (k, path) in paths.iter().enumerate() {
            let basis = EigenBasis::import(path)?;
            if basis.potential != pot.axis(k)? || basis.hbar != hbar {
                return Err(CliError::Config(format!(
                    "{} was built for a different problem",
                    path.display()
                )));
            }
            bases.push(basis);
        }
        let model = SpectralModel::from_bases(pot, bases).map_err(reference_err)?;
        if model.reliable_up_to() < max_energy {
            return Err(CliError::Reliability(format!(
                "cached bases in {} resolve energies up to {}, {max_energy} needed",
                dir.display(),
                model.reliable_up_to()
            )));
        }
        return Ok(model);
    }
    let model = SpectralModel::build(pot, hbar, max_energy, &cfg.grid).map_err(reference_err)?;
    for (k, axis) in model.axes.iter().enumerate() {
        if let Some(basis) = axis.basis() {
            basis.export(dir, &format!("basis-h{hbar:e}-axis{k}"))?;
        }
    }
    Ok(model)
}

pub fn compute_exact(ctx: &Context) -> Result<Vec<ExactRow>, CliError> {
    let cfg = &ctx.config;
    let window = ctx.window()?;
    let mut rows = Vec::new();
    for &hbar in cfg.require_hbars()? {
        let queries = cfg.queries(hbar)?;
        let sharp = cfg
            .exact
            .sharp_interval
            .map(|[a, b]| (cfg.energy - a * hbar, cfg.energy + b * hbar));
        let top = (cfg.energy + window.lambda_cut * hbar).max(sharp.map_or(0.0, |s| s.1));
        // A small margin keeps the top level away from the reliability cutoff.
        let model = spectral_model(ctx, hbar, top * 1.01)?;
        let points: Vec<_> = queries.iter().map(|q| q.point.clone()).collect();
        let smoothed = model.smoothed_spectral_wigner(cfg.energy, &window, &points)?;
        let sharp_values = match sharp {
            Some((lo, hi)) => Some(model.sharp_spectral_wigner(lo, hi, &points)?.values),
            None => None,
        };
        for (k, q) in queries.iter().enumerate() {
            rows.push(ExactRow {
                hbar,
                index: q.index,
                point: q.point.to_vec(),
                s: q.s,
                u: q.u,
                smoothed: smoothed.values[k],
                sharp: sharp_values.as_ref().map(|v| v[k]),
            });
        }
    }
    Ok(rows)
}

fn exact_table(d: usize, rows: &[ExactRow], ledger_id: &str) -> Table {
    let mut table = Table::new(header(
        &["hbar", "index"],
        d,
        &["s", "u", "exact", "sharp", "convention_id"],
    ));
    for r in rows {
        let mut row = vec![fmt_f64(r.hbar), r.index.to_string()];
        row.extend(r.point.iter().map(|v| fmt_f64(*v)));
        row.extend([
            fmt_f64(r.s),
            fmt_f64(r.u),
            fmt_f64(r.smoothed),
            fmt_opt(r.sharp),
            ledger_id.to_string(),
        ]);
        table.push(row);
    }
    table
}

pub fn cmd_exact(ctx: &Context) -> Result<Table, CliError> {
    let rows = compute_exact(ctx)?;
    let table = exact_table(ctx.config.dimension(), &rows, &ctx.ledger.id);
    table.write(&ctx.out.join("exact.csv"))?;
    let window = ctx.window()?;
    let f0 = window.f(0.0);
    let a = window.a;
    let mut sanity = Table::new(
        [
            "a",
            "lambda_cut",
            "f0",
            "lower_bound",
            "upper_bound",
            "within_bounds",
            "convention_id",
        ]
        .map(String::from)
        .to_vec(),
    );
    let (lo, hi) = (a / (2.0 * std::f64::consts::PI), a / std::f64::consts::PI);
    sanity.push(vec![
        fmt_f64(a),
        fmt_f64(window.lambda_cut),
        fmt_f64(f0),
        fmt_f64(lo),
        fmt_f64(hi),
        (lo < f0 && f0 < hi).to_string(),
        ctx.ledger.id.clone(),
    ]);
    sanity.write(&ctx.out.join("window.csv"))?;
    Ok(table)
}

/// HK quadrature against stationary phase over times, `hbar` values and points.
pub fn cmd_hk(ctx: &Context) -> Result<Table, CliError> {
    let cfg = &ctx.config;
    let d = cfg.dimension();
    let mut table = Table::new(header(
        &["t", "hbar", "index"],
        d,
        &[
            "s",
            "u",
            "hk_re",
            "hk_im",
            "hk_modulus",
            "hk_phase",
            "sp_re",
            "sp_im",
            "sp_modulus",
            "sp_phase",
            "abs_err",
            "quad_error",
            "node_count",
            "flagged",
            "status",
            "convention_id",
        ],
    ));
    let mut flagged = 0;
    for &t in &cfg.hk.times {
        for &hbar in cfg.require_hbars()? {
            for q in cfg.queries(hbar)? {
                let ev = wigner_propagator(t, &q.point, &cfg.potential, hbar, &cfg.hk.quadrature);
                let sp = stationary_phase_prediction(t, &q.point, hbar, &cfg.potential, &cfg.hk.quadrature.integrator);
                let mut row = vec![fmt_f64(t), fmt_f64(hbar), q.index.to_string()];
                row.extend(point_fields(&q));
                row.extend([fmt_f64(q.s), fmt_f64(q.u)]);
                let complex = |z: Complex64| [z.re, z.im, z.norm(), z.arg()].map(fmt_f64);
                match &ev {
                    Ok(ev) => row.extend(complex(ev.value)),
                    Err(_) => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
                match &sp {
                    Ok(sp) => row.extend(complex(sp.value)),
                    Err(_) => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
                match (&ev, &sp) {
                    (Ok(e), Ok(s)) => row.push(fmt_f64((e.value - s.value).norm())),
                    _ => row.push(String::new()),
                }
                match &ev {
                    Ok(ev) => {
                        flagged += usize::from(ev.flagged);
                        row.extend([
                            fmt_f64(ev.estimated_error),
                            ev.node_count.to_string(),
                            ev.flagged.to_string(),
                        ]);
                    }
                    Err(_) => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
                let status = match (&ev, &sp) {
                    (Err(e), _) | (_, Err(e)) => e.to_string(),
                    _ => "ok".into(),
                };
                row.push(status);
                row.push(ctx.ledger.id.clone());
                table.push(row);
            }
        }
    }
    table.write(&ctx.out.join("hk.csv"))?;
    if ctx.strict && flagged > 0 {
        return Err(CliError::Reliability(format!(
            "{flagged} HK rows exceed the quadrature error threshold"
        )));
    }
    Ok(table)
}

/// One joined comparison row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub hbar: f64,
    pub index: usize,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub s: f64,
    pub u: f64,
    pub rho: Option<f64>,
    pub mu: Option<f64>,
    pub u00: Option<f64>,
    pub predicted: f64,
    pub exact: f64,
    pub abs_err: f64,
    /// `abs_err / |exact|`.
    pub rel_err: f64,
    /// `abs_err` over the largest `|exact|` at the same `hbar`.
    pub peak_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbarSummary {
    pub hbar: f64,
    pub rows: usize,
    /// Largest `peak_rel_err` over oscillatory rows.
    pub max_peak_rel_err: f64,
    /// Largest `rel_err` at local extrema of `|exact|` in the oscillatory region.
    pub max_rel_err_at_extrema: Option<f64>,
    pub extrema: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_hbar: Vec<HbarSummary>,
    /// Least-squares slope of `ln max_peak_rel_err` against `ln hbar`.
    pub slope_peak_rel_err: Option<f64>,
    /// Same for `max_rel_err_at_extrema`.
    pub slope_rel_err_at_extrema: Option<f64>,
    pub skipped_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub convention_id: String,
    pub ledger: ConventionLedger,
    pub potential: Potential,
    pub energy: f64,
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

/// Least-squares slope of `ln y` against `ln x`; needs at least three points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Per-`hbar` error statistics; rows are taken in query order.
pub fn summarize(rows: &[ReportRow], hbars: &[f64], oscillatory_u_max: f64, skipped_rows: usize) -> Summary {
    let mut per_hbar = Vec::new();
    for &hbar in hbars {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.hbar == hbar).collect();
        if group.is_empty() {
            continue;
        }
        let oscillatory = |r: &ReportRow| r.u <= oscillatory_u_max;
        let max_peak_rel_err = group
            .iter()
            .filter(|r| oscillatory(r))
            .map(|r| r.peak_rel_err)
            .fold(0.0, f64::max);
        let mut extrema = Vec::new();
        for w in group.windows(3) {
            let (a, b, c) = (w[0].exact.abs(), w[1].exact.abs(), w[2].exact.abs());
            if b >= a && b >= c && oscillatory(w[1]) {
                extrema.push(w[1].rel_err);
            }
        }
        per_hbar.push(HbarSummary {
            hbar,
            rows: group.len(),
            max_peak_rel_err,
            max_rel_err_at_extrema: extrema.iter().copied().reduce(f64::max),
            extrema: extrema.len(),
        });
    }
    let slope_peak_rel_err = log_log_slope(
        &per_hbar
            .iter()
            .map(|s| (s.hbar, s.max_peak_rel_err))
            .collect::<Vec<_>>(),
    );
    let slope_rel_err_at_extrema = log_log_slope(
        &per_hbar
            .iter()
            .filter_map(|s| s.max_rel_err_at_extrema.map(|e| (s.hbar, e)))
            .collect::<Vec<_>>(),
    );
    Summary {
        per_hbar,
        slope_peak_rel_err,
        slope_rel_err_at_extrema,
        skipped_rows,
    }
}

/// Joins prediction and exact rows on `(hbar, index)`; the point
/// coordinates must agree exactly.
pub fn join(d: usize, predictions: &[PredictRow], exact: &[ExactRow]) -> Result<(Vec<ReportRow>, usize), CliError> {
    if predictions.len() != exact.len() {
        return Err(CliError::JoinMismatch(format!(
            "{} prediction rows against {} exact rows",
            predictions.len(),
            exact.len()
        )));
    }
    let mut rows = Vec::with_capacity(predictions.len());
    let mut skipped = 0;
    for (p, e) in predictions.iter().zip(exact) {
        if p.hbar != e.hbar || p.index != e.index || p.point != e.point {
            return Err(CliError::JoinMismatch(format!(
                "row (hbar {}, index {}) does not match (hbar {}, index {})",
                p.hbar, p.index, e.hbar, e.index
            )));
        }
        let Some(predicted) = p.predicted.filter(|v| v.is_finite()) else {
            skipped += 1;
            continue;
        };
        let abs_err = (predicted - e.smoothed).abs();
        rows.push(ReportRow {
            hbar: p.hbar,
            index: p.index,
            x: p.point[..d].to_vec(),
            xi: p.point[d..].to_vec(),
            s: p.s,
            u: p.u,
            rho: p.rho,
            mu: p.mu,
            u00: p.u00,
            predicted,
            exact: e.smoothed,
            abs_err,
            rel_err: abs_err / e.smoothed.abs(),
            peak_rel_err: 0.0,
        });
    }
    let hbars: Vec<f64> = rows.iter().map(|r| r.hbar).collect();
    for h in hbars.iter().copied() {
        let peak = rows
            .iter()
            .filter(|r| r.hbar == h)
            .map(|r| r.exact.abs())
            .fold(0.0, f64::max);
        for r in rows.iter_mut().filter(|r| r.hbar == h) {
            r.peak_rel_err = r.abs_err / peak;
        }
    }
    Ok((rows, skipped))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| CliError::Config(format!("cannot parse {what} value {s:?}")))
}

fn opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn column(cols: &std::collections::HashMap<&str, usize>, name: &str, file: &Path) -> Result<usize, CliError> {
    cols.get(name)
        .copied()
        .ok_or_else(|| CliError::Config(format!("{} lacks column {name}", file.display())))
}

/// Reads a `predict.csv` written by this tool.
pub fn read_predictions(path: &Path, d: usize) -> Result<Vec<PredictRow>, CliError> {
    let t = Table::read(path)?;
    let cols = t.column_index();
    let c = |n: &str| column(&cols, n, path);
    let point_cols: Vec<usize> = point_columns(d).iter().map(|n| c(n)).collect::<Result<_, _>>()?;
    let (ch, ci, cs, cu, crho, cmu, cu00, cp, cr, cst) = (
        c("hbar")?,
        c("index")?,
        c("s")?,
        c("u")?,
        c("rho")?,
        c("mu")?,
        c("u00")?,
        c("predicted")?,
        c("route")?,
        c("status")?,
    );
    t.rows
        .iter()
        .map(|r| {
            Ok(PredictRow {
                hbar: parse_f64(&r[ch], "hbar")?,
                index: r[ci]
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad index {:?}", r[ci])))?,
                point: point_cols
                    .iter()
                    .map(|&k| parse_f64(&r[k], "coordinate"))
                    .collect::<Result<_, _>>()?,
                s: parse_f64(&r[cs], "s")?,
                u: parse_f64(&r[cu], "u")?,
                rho: opt(parse_f64(&r[crho], "rho")?),
                mu: opt(parse_f64(&r[cmu], "mu")?),
                u00: opt(parse_f64(&r[cu00], "u00")?),
                predicted: opt(parse_f64(&r[cp], "predicted")?),
                route: r[cr].clone(),
                status: r[cst].clone(),
            })
        })
        .collect()
}

/// Reads an `exact.csv` written by this tool.
pub fn read_exact(path: &Path, d: usize) -> Result<Vec<ExactRow>, CliError> {
    let t = Table::read(path)?;
    let cols = t.column_index();
    let c = |n: &str| column(&cols, n, path);
    let point_cols: Vec<usize> = point_columns(d).iter().map(|n| c(n)).collect::<Result<_, _>>()?;
    let (ch, ci, cs, cu, ce, csh) = (c("hbar")?, c("index")?, c("s")?, c("u")?, c("exact")?, c("sharp")?);
    t.rows
        .iter()
        .map(|r| {
            Ok(ExactRow {
                hbar: parse_f64(&r[ch], "hbar")?,
                index: r[ci]
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad index {:?}", r[ci])))?,
                point: point_cols
                    .iter()
                    .map(|&k| parse_f64(&r[k], "coordinate"))
                    .collect::<Result<_, _>>()?,
                s: parse_f64(&r[cs], "s")?,
                u: parse_f64(&r[cu], "u")?,
                smoothed: parse_f64(&r[ce], "exact")?,
                sharp: opt(parse_f64(&r[csh], "sharp")?),
            })
        })
        .collect()
}

/// Fits the Airy prefactor on oscillator data and freezes it in a ledger.
pub fn calibrate(
    d: usize,
    predictions: &[PredictRow],
    exact: &[ExactRow],
    derived: &ConventionLedger,
) -> Result<ConventionLedger, CliError> {
    let mut unit = Vec::new();
    let mut reference = Vec::new();
    let mut hbars = Vec::new();
    for (p, e) in predictions.iter().zip(exact) {
        if p.route != "airy" {
            return Err(CliError::Config("calibration uses the Airy route only".into()));
        }
        if let Some(v) = p.predicted {
            unit.push(v / derived.airy_prefactor);
            reference.push(e.smoothed);
            if !hbars.contains(&p.hbar) {
                hbars.push(p.hbar);
            }
        }
    }
    let (c, residual) = wigner_airy::airy::fit_prefactor(&unit, &reference)?;
    Ok(ConventionLedger::calibrated(
        d,
        c,
        CalibrationRecord {
            samples: unit.len(),
            relative_residual: residual,
            hbars,
        },
    ))
}

fn rescale(rows: &mut [PredictRow], from: &ConventionLedger, to: &ConventionLedger) {
    for r in rows {
        r.predicted = r.predicted.map(|v| v / from.airy_prefactor * to.airy_prefactor);
    }
}

/// Joins predictions with exact values, optionally calibrating first.
pub fn cmd_compare(ctx: &Context, calibrate_ledger: bool) -> Result<ComparisonReport, CliError> {
    let cfg = &ctx.config;
    let d = cfg.dimension();
    let (mut predictions, exact, used) = match (&cfg.compare.predict_csv, &cfg.compare.exact_csv) {
        (Some(pp), Some(ep)) => {
            let predictions = read_predictions(pp, d)?;
            (predictions, read_exact(ep, d)?, ctx.ledger.clone())
        }
        (None, None) => {
            // Calibration fits against derived-constant predictions.
            let basis = if calibrate_ledger {
                ConventionLedger::derived(d)
            } else {
                ctx.ledger.clone()
            };
            (compute_predictions(ctx, &basis)?, compute_exact(ctx)?, basis)
        }
        _ => {
            return Err(CliError::Config(
                "compare needs both predict_csv and exact_csv, or neither".into(),
            ))
        }
    };
    let ledger = if calibrate_ledger {
        if !cfg.potential.is_unit_oscillator() {
            return Err(CliError::Config("calibration runs on the unit oscillator only".into()));
        }
        if cfg.compare.predict_csv.is_some() {
            return Err(CliError::Config(
                "calibration computes its own predictions; drop predict_csv".into(),
            ));
        }
        let ledger = calibrate(d, &predictions, &exact, &used)?;
        let path = cfg
            .compare
            .calibration_output
            .clone()
            .unwrap_or_else(|| ctx.out.join("ledger.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&ledger)?)?;
        rescale(&mut predictions, &used, &ledger);
        ledger
    } else {
        used
    };
    let (rows, skipped) = join(d, &predictions, &exact)?;
    let mut hbars: Vec<f64> = Vec::new();
    for r in &predictions {
        if !hbars.contains(&r.hbar) {
            hbars.push(r.hbar);
        }
    }
    let summary = summarize(&rows, &hbars, cfg.compare.oscillatory_u_max, skipped);
    let report = ComparisonReport {
        convention_id: ledger.id.clone(),
        ledger,
        potential: cfg.potential.clone(),
        energy: cfg.energy,
        rows,
        summary,
    };
    let mut table = Table::new(header(
        &["hbar", "index"],
        d,
        &[
            "s",
            "u",
            "rho",
            "mu",
            "u00",
            "predicted",
            "exact",
            "abs_err",
            "rel_err",
            "peak_rel_err",
            "convention_id",
        ],
    ));
    for r in &report.rows {
        let mut row = vec![fmt_f64(r.hbar), r.index.to_string()];
        row.extend(r.x.iter().chain(&r.xi).map(|v| fmt_f64(*v)));
        row.extend([
            fmt_f64(r.s),
            fmt_f64(r.u),
            fmt_opt(r.rho),
            fmt_opt(r.mu),
            fmt_opt(r.u00),
        ]);
        row.extend([r.predicted, r.exact, r.abs_err, r.rel_err, r.peak_rel_err].map(fmt_f64));
        row.push(report.convention_id.clone());
        table.push(row);
    }
    table.write(&ctx.out.join("compare.csv"))?;
    std::fs::write(ctx.out.join("compare.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_row(hbar: f64, index: usize, u: f64, exact: f64, predicted: f64) -> ReportRow {
        let abs_err = (predicted - exact).abs();
        ReportRow {
            hbar,
            index,
            x: vec![0.0],
            xi: vec![0.0],
            s: 1.0,
            u,
            rho: None,
            mu: None,
            u00: None,
            predicted,
            exact,
            abs_err,
            rel_err: abs_err / exact.abs(),
            peak_rel_err: abs_err,
        }
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [0.02, 0.01, 0.005]
            .iter()
            .map(|h: &f64| (*h, 3.0 * h.powf(1.0 / 3.0)))
            .collect();
        assert!((log_log_slope(&pts).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(log_log_slope(&pts[..2]).is_none());
    }

    #[test]
    fn extrema_are_taken_in_the_oscillatory_region_only() {
        let exact = [0.1, 0.9, 0.2, -0.7, 0.1, 0.5, 0.05];
        let rows: Vec<ReportRow> = exact
            .iter()
            .enumerate()
            .map(|(k, e)| report_row(0.01, k, -3.0 + k as f64, *e, e * 1.1))
            .collect();
        // u runs from -3 to 3; the peak at u = 2 lies outside the cutoff.
        let summary = summarize(&rows, &[0.01], 0.0, 2);
        let s = &summary.per_hbar[0];
        assert_eq!(s.extrema, 2);
        assert!((s.max_rel_err_at_extrema.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(summary.skipped_rows, 2);
        assert!(summary.slope_peak_rel_err.is_none());
    }

    fn predict_row(hbar: f64, index: usize, point: f64, predicted: Option<f64>) -> PredictRow {
        PredictRow {
            hbar,
            index,
            point: vec![point, 0.0],
            s: 1.0,
            u: 0.0,
            rho: None,
            mu: None,
            u00: None,
            predicted,
            route: "airy".into(),
            status: "ok".into(),
        }
    }

    fn exact_row(hbar: f64, index: usize, point: f64, smoothed: f64) -> ExactRow {
        ExactRow {
            hbar,
            index,
            point: vec![point, 0.0],
            s: 1.0,
            u: 0.0,
            smoothed,
            sharp: None,
        }
    }

    #[test]
    fn join_scores_against_the_per_hbar_peak() {
        let p = [
            predict_row(0.1, 0, 0.5, Some(1.1)),
            predict_row(0.1, 1, 0.6, Some(-1.5)),
            predict_row(0.1, 2, 0.7, None),
        ];
        let e = [
            exact_row(0.1, 0, 0.5, 1.0),
            exact_row(0.1, 1, 0.6, -2.0),
            exact_row(0.1, 2, 0.7, 0.3),
        ];
        let (rows, skipped) = join(1, &p, &e).unwrap();
        assert_eq!(skipped, 1);
        assert!((rows[0].rel_err - 0.1).abs() < 1e-12);
        assert!((rows[0].peak_rel_err - 0.05).abs() < 1e-12);
        assert!((rows[1].peak_rel_err - 0.25).abs() < 1e-12);
    }

    #[test]
    fn join_rejects_moved_points() {
        let p = [predict_row(0.1, 0, 0.5, Some(1.0))];
        let e = [exact_row(0.1, 0, 0.5000001, 1.0)];
        assert_eq!(join(1, &p, &e).unwrap_err().exit_code(), 4);
        assert_eq!(join(1, &p, &[]).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn calibration_recovers_a_scaled_constant() {
        let derived = ConventionLedger::derived(1);
        let p: Vec<PredictRow> = (0..5)
            .map(|k| predict_row(0.1, k, k as f64, Some(derived.airy_prefactor * (k as f64 - 1.7))))
            .collect();
        let e: Vec<ExactRow> = (0..5)
            .map(|k| exact_row(0.1, k, k as f64, 0.3 * (k as f64 - 1.7)))
            .collect();
        let ledger = calibrate(1, &p, &e, &derived).unwrap();
        assert!((ledger.airy_prefactor - 0.3).abs() < 1e-12);
        assert_eq!(ledger.source, wigner_airy::airy::PrefactorSource::Calibrated);
        assert_eq!(ledger.calibration.unwrap().samples, 5);
    }
}
