use std::path::{Path, PathBuf};

use metapop_core::clustering::cluster_pois;
use metapop_core::data::{generate_scenario, load_inputs, read_contacts, write_contacts, write_scenario, InputPaths, Inputs};
use metapop_core::estimator::{
    self, forecast_after_fit, multi_restart_fit, persistence_rmse, tune_lag, EpiData, FitResult, Forecast,
};
use metapop_core::mobility::{benchmark_modes, build_contact_series, NetworkMode};
use metapop_core::Membership;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Recorder;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn inputs_dir(&self) -> PathBuf {
        self.cfg.pipeline.inputs.clone().unwrap_or_else(|| self.out.join("data"))
    }

    fn clusters_file(&self) -> PathBuf {
        self.out.join("clusters").join("clusters.csv")
    }

    fn networks_dir(&self, mode: NetworkMode) -> PathBuf {
        self.out.join("networks").join(mode.name())
    }

    fn fit_file(&self, mode: NetworkMode) -> PathBuf {
        self.out.join("calibrate").join(mode.name()).join("fit.json")
    }

    fn forecast_file(&self, mode: NetworkMode) -> PathBuf {
        self.out.join("forecast").join(mode.name()).join("forecast.csv")
    }

    fn load(&self, rec: &mut Recorder) -> Result<Inputs, CliError> {
        let paths = InputPaths::in_dir(&self.inputs_dir());
        for p in paths.all() {
            require(p, "synth")?;
        }
        rec.read(paths.all().iter().map(|p| p.to_path_buf()));
        Ok(load_inputs(&paths)?)
    }

    /// Smoothed observations with every model day's contacts.
    fn epi_data(&self, inputs: &Inputs, mode: NetworkMode, rec: &mut Recorder) -> Result<EpiData, CliError> {
        let dir = self.networks_dir(mode);
        require(&dir.join("day_0000.csv"), "networks")?;
        let contacts = read_contacts(&dir, inputs.tracts.len())?;
        rec.read((0..contacts.len()).map(|t| dir.join(format!("day_{t:04}.csv"))));
        let obs = inputs.reports.observations(self.cfg.pipeline.smoothing_window, 0)?;
        Ok(EpiData::new(inputs.populations(), contacts, obs)?)
    }

    fn load_fit(&self, mode: NetworkMode, rec: &mut Recorder) -> Result<FitResult, CliError> {
        let path = self.fit_file(mode);
        require(&path, "calibrate")?;
        rec.read([path.clone()]);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text).map_err(metapop_core::Error::from)?)
    }

    /// Lagged observations, checked to cover the calibration and forecast windows.
    fn held_out(&self, data: &EpiData, lag: usize) -> Result<EpiData, CliError> {
        let p = &self.cfg.pipeline;
        let lagged = data.lagged(lag)?;
        if lagged.len() < p.fit_days + p.horizon {
            return Err(CliError::Config(format!(
                "{} observed days after lag {lag}, fit_days + horizon needs {}",
                lagged.len(),
                p.fit_days + p.horizon
            )));
        }
        Ok(lagged)
    }
}

fn require(path: &Path, stage: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingStage {
            stage,
            path: path.to_path_buf(),
        })
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn synth(ctx: &Context, rec: &mut Recorder) -> Result<(), CliError> {
    let scenario = generate_scenario(&ctx.cfg.scenario)?;
    let dir = ctx.out.join("data");
    create_dir(&dir)?;
    rec.wrote(write_scenario(&scenario, &dir)?);
    log::info!(
        "scenario: {} tracts, {} POIs, {} days in {}",
        scenario.tracts.len(),
        scenario.pois.len(),
        scenario.reports.len(),
        dir.display()
    );
    Ok(())
}

pub fn cluster(ctx: &Context, rec: &mut Recorder) -> Result<(), CliError> {
    let inputs = ctx.load(rec)?;
    let pois = &inputs.mobility.pois;
    let result = cluster_pois(pois, &ctx.cfg.clustering, ctx.cfg.seed)?;

    let path = ctx.clusters_file();
    let mut w = csv_writer(&path)?;
    w.write_record(["poi_id", "cluster_id"])?;
    for (p, c) in pois.iter().zip(result.membership.labels()) {
        w.write_record([p.poi_id.clone(), c.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let emb_path = path.with_file_name("embedding.csv");
    let c = &result.embedding.c;
    let mut w = csv_writer(&emb_path)?;
    let mut header = vec!["poi_id".to_string()];
    header.extend((0..c.ncols()).map(|k| format!("c{k}")));
    w.write_record(&header)?;
    for (i, p) in pois.iter().enumerate() {
        let mut row = vec![p.poi_id.clone()];
        row.extend(c.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(&emb_path, e))?;
    rec.wrote([path, emb_path]);
    log::info!("{} POIs in {} clusters", pois.len(), result.membership.n_clusters());
    Ok(())
}

fn read_membership(ctx: &Context, inputs: &Inputs, rec: &mut Recorder) -> Result<Membership, CliError> {
    let path = ctx.clusters_file();
    require(&path, "cluster")?;
    rec.read([path.clone()]);
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut by_id = std::collections::HashMap::new();
    for row in r.records() {
        let row = row?;
        let cluster: usize = row
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}: bad cluster_id in {row:?}", path.display())))?;
        by_id.insert(row.get(0).unwrap_or_default().to_string(), cluster);
    }
    let labels: Vec<usize> = inputs
        .mobility
        .pois
        .iter()
        .map(|p| {
            by_id.get(&p.poi_id).copied().ok_or_else(|| {
                CliError::Config(format!("POI {} has no cluster in {}", p.poi_id, path.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Membership::from_labels(&labels))
}

pub fn networks(ctx: &Context, modes: &[NetworkMode], rec: &mut Recorder) -> Result<(), CliError> {
    let inputs = ctx.load(rec)?;
    let pattern = if modes.contains(&NetworkMode::Pattern) {
        Some(read_membership(ctx, &inputs, rec)?)
    } else {
        None
    };
    let pops = inputs.populations();
    for &mode in modes {
        let membership = benchmark_modes(mode, &inputs.mobility.pois, pattern.as_ref())?;
        let series = build_contact_series(&inputs.mobility, &pops, &membership, &ctx.cfg.priors)?;
        let dir = ctx.networks_dir(mode);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        rec.wrote(write_contacts(&dir, &series)?);
        log::info!("{mode}: {} clusters, {} days of contacts", membership.n_clusters(), series.len());
    }
    Ok(())
}

pub fn calibrate(ctx: &Context, modes: &[NetworkMode], rec: &mut Recorder) -> Result<(), CliError> {
    let inputs = ctx.load(rec)?;
    let p = &ctx.cfg.pipeline;
    for &mode in modes {
        let data = ctx.epi_data(&inputs, mode, rec)?;
        let max_lag = p.lag_grid.iter().copied().max().unwrap_or(0);
        if data.len() < p.fit_days + max_lag {
            return Err(CliError::Config(format!(
                "{} observed days cannot cover fit_days {} plus lag {max_lag}",
                data.len(),
                p.fit_days
            )));
        }
        let selection = tune_lag(&data.truncated(p.fit_days + max_lag)?, &p.lag_grid, &ctx.cfg.fit, ctx.cfg.seed)?;
        let window = data.lagged(selection.lag)?.truncated(p.fit_days)?;
        let mut fit = multi_restart_fit(&window, &ctx.cfg.fit, ctx.cfg.seed)?;
        fit.lag = selection.lag;

        let path = ctx.fit_file(mode);
        create_dir(path.parent().expect("fit file has a directory"))?;
        let text = serde_json::to_string_pretty(&fit).map_err(metapop_core::Error::from)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        let lag_path = path.with_file_name("lags.json");
        let text = serde_json::to_string_pretty(&selection).map_err(metapop_core::Error::from)?;
        std::fs::write(&lag_path, text + "\n").map_err(|e| CliError::io(&lag_path, e))?;
        rec.wrote([path, lag_path]);
        log::info!(
            "{mode}: beta {:.4} kappa {:.4} delta {:.4} rho {:.5}, lag {}, test loglik {:.2}",
            fit.params.beta,
            fit.params.kappa,
            fit.params.delta,
            fit.params.rho,
            fit.lag,
            fit.test_loglik
        );
    }
    Ok(())
}

/// One forecast day as stored between the forecast and evaluate stages.
#[derive(Debug, Serialize, Deserialize)]
struct ForecastRow {
    day: usize,
    mean_cases: f64,
    mean_deaths: f64,
    var_cases: f64,
    cov_cases_deaths: f64,
    var_deaths: f64,
    lo_cases: f64,
    hi_cases: f64,
    lo_deaths: f64,
    hi_deaths: f64,
}

pub fn forecast(ctx: &Context, modes: &[NetworkMode], rec: &mut Recorder) -> Result<(), CliError> {
    let inputs = ctx.load(rec)?;
    let p = &ctx.cfg.pipeline;
    for &mode in modes {
        let fit = ctx.load_fit(mode, rec)?;
        let data = ctx.held_out(&ctx.epi_data(&inputs, mode, rec)?, fit.lag)?;
        let fc = forecast_after_fit(&data, &ctx.cfg.fit, &fit.best, p.fit_days, p.horizon)?;

        let path = ctx.forecast_file(mode);
        let mut w = csv_writer(&path)?;
        for k in 0..fc.horizon() {
            let (m, c) = (&fc.mean[k], &fc.cov[k]);
            w.serialize(ForecastRow {
                day: p.fit_days + k,
                mean_cases: m[0],
                mean_deaths: m[1],
                var_cases: c[(0, 0)],
                cov_cases_deaths: c[(0, 1)],
                var_deaths: c[(1, 1)],
                lo_cases: fc.lower[k][0],
                hi_cases: fc.upper[k][0],
                lo_deaths: fc.lower[k][1],
                hi_deaths: fc.upper[k][1],
            })?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;

        let plot = path.with_file_name("forecast_plot.csv");
        let mut w = csv_writer(&plot)?;
        w.write_record(["day", "mean_cases", "lo_cases", "hi_cases", "mean_deaths", "lo_deaths", "hi_deaths"])?;
        for k in 0..fc.horizon() {
            let row = [
                fc.mean[k][0],
                fc.lower[k][0],
                fc.upper[k][0],
                fc.mean[k][1],
                fc.lower[k][1],
                fc.upper[k][1],
            ];
            let mut rec = vec![(p.fit_days + k).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CliError::io(&plot, e))?;
        rec.wrote([path, plot]);
        log::info!("{mode}: forecast days {}..{}", p.fit_days, p.fit_days + p.horizon);
    }
    Ok(())
}

fn read_forecast(path: &Path) -> Result<Forecast, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut fc = Forecast {
        mean: Vec::new(),
        cov: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    for row in r.deserialize() {
        let row: ForecastRow = row?;
        fc.mean.push(DVector::from_column_slice(&[row.mean_cases, row.mean_deaths]));
        fc.cov.push(DMatrix::from_row_slice(
            2,
            2,
            &[row.var_cases, row.cov_cases_deaths, row.cov_cases_deaths, row.var_deaths],
        ));
        fc.lower.push(DVector::from_column_slice(&[row.lo_cases, row.lo_deaths]));
        fc.upper.push(DVector::from_column_slice(&[row.hi_cases, row.hi_deaths]));
    }
    Ok(fc)
}

/// Scores every requested mode that has a forecast. With no `--mode`, modes
/// without a forecast are skipped, but at least one must exist.
pub fn evaluate(ctx: &Context, modes: &[NetworkMode], explicit: bool, rec: &mut Recorder) -> Result<(), CliError> {
    let available: Vec<NetworkMode> = modes
        .iter()
        .copied()
        .filter(|m| explicit || ctx.forecast_file(*m).exists())
        .collect();
    if available.is_empty() {
        return Err(CliError::MissingStage {
            stage: "forecast",
            path: ctx.out.join("forecast"),
        });
    }
    let inputs = ctx.load(rec)?;
    let p = &ctx.cfg.pipeline;
    let path = ctx.out.join("evaluate").join("metrics.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "mode",
        "loglik",
        "rmse_cases",
        "rmse_deaths",
        "persistence_rmse_cases",
        "persistence_rmse_deaths",
    ])?;
    for mode in available {
        let fc_path = ctx.forecast_file(mode);
        require(&fc_path, "forecast")?;
        let fit = ctx.load_fit(mode, rec)?;
        let fc = read_forecast(&fc_path)?;
        rec.read([fc_path]);
        if fc.horizon() != p.horizon {
            return Err(CliError::Config(format!(
                "{mode} forecast covers {} days but pipeline.horizon is {}",
                fc.horizon(),
                p.horizon
            )));
        }
        let obs = inputs.reports.observations(p.smoothing_window, fit.lag)?;
        if obs.len() < p.fit_days + p.horizon {
            return Err(CliError::Config(format!(
                "{} observed days after lag {}, fit_days + horizon needs {}",
                obs.len(),
                fit.lag,
                p.fit_days + p.horizon
            )));
        }
        let held = &obs[p.fit_days..p.fit_days + p.horizon];
        let ev = estimator::evaluate(&fc, held)?;
        let persist = persistence_rmse(&obs[p.fit_days - 1], held);
        let values = [ev.loglik, ev.rmse[0], ev.rmse[1], persist[0], persist[1]];
        let mut row = vec![mode.name().to_string()];
        row.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
        log::info!(
            "{mode}: loglik {:.2}, cases RMSE {:.2} (persistence {:.2}), deaths RMSE {:.3}",
            ev.loglik,
            ev.rmse[0],
            persist[0],
            ev.rmse[1]
        );
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    rec.wrote([path]);
    Ok(())
}
