//! Paired-run sweeps over the label-prior weights and the PFR weight.

use std::fmt::Write as _;

use serde::Serialize;

use crate::boundary::gridsearch_offset;
use crate::error::Result;

use super::corpus::{generate_corpus, Corpus, CorpusSpec};
use super::eval::evaluate;
use super::train::{train, Method, TrainConfig};

pub const GAMMA_TRAIN_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const GAMMA_INF_GRID: [f64; 2] = [0.0, 1.0];
pub const LAMBDA_PFR_GRID: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub train: CorpusSpec,
    pub test: CorpusSpec,
    /// Configuration of the label-prior sweep models.
    pub base: TrainConfig,
    /// Configuration of the PFR sweep models; `lambda_pfr` is overwritten.
    pub pfr_base: TrainConfig,
    pub thresholds_ms: Vec<f64>,
    /// `(lo, hi, step)` for the offset grid search.
    pub offset_grid: (f64, f64, f64),
}

impl Default for SweepSetup {
    fn default() -> Self {
        let train = CorpusSpec::default();
        Self {
            test: train.held_out(80),
            train,
            base: TrainConfig::default(),
            pfr_base: TrainConfig::with_method(Method::Pfr),
            thresholds_ms: vec![20.0, 80.0],
            offset_grid: (-200.0, 200.0, 10.0),
        }
    }
}

impl SweepSetup {
    fn corpora(&self) -> Result<(Corpus, Corpus)> {
        Ok((generate_corpus(&self.train)?, generate_corpus(&self.test)?))
    }

    fn primary_threshold(&self) -> f64 {
        self.thresholds_ms.first().copied().unwrap_or(80.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricCells {
    pub ave_st_delta_ms: f64,
    pub ave_ed_delta_ms: f64,
    pub pct_ws: Vec<f64>,
    pub pct_we: Vec<f64>,
}

impl MetricCells {
    fn from_report(report: &crate::metrics::MetricsReport, thresholds: &[f64]) -> Self {
        let nan = f64::NAN;
        Self {
            ave_st_delta_ms: report.stats.as_ref().map_or(nan, |s| s.ave_st_delta_ms),
            ave_ed_delta_ms: report.stats.as_ref().map_or(nan, |s| s.ave_ed_delta_ms),
            pct_ws: thresholds.iter().map(|&t| report.ws(t).unwrap_or(nan)).collect(),
            pct_we: thresholds.iter().map(|&t| report.we(t).unwrap_or(nan)).collect(),
        }
    }

    fn csv(&self, out: &mut String) {
        let _ = write!(out, "{:.4},{:.4}", self.ave_st_delta_ms, self.ave_ed_delta_ms);
        for v in self.pct_ws.iter().chain(&self.pct_we) {
            let _ = write!(out, ",{v:.4}");
        }
    }
}

fn metric_header(thresholds: &[f64]) -> String {
    let mut h = String::from("ave_st_delta_ms,ave_ed_delta_ms");
    for t in thresholds {
        let _ = write!(h, ",pct_ws_lt_{t}");
    }
    for t in thresholds {
        let _ = write!(h, ",pct_we_lt_{t}");
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub gamma_train: f64,
    pub gamma_inf: f64,
    pub metrics: MetricCells,
    pub blank_occupancy_train: f64,
    pub blank_occupancy_inf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PfrRow {
    pub lambda_pfr: f64,
    /// Metrics at the grid-searched offset.
    pub metrics: MetricCells,
    pub offset_ms: f64,
    pub mean_peak_relative_position: f64,
    pub blank_occupancy_train: f64,
}

#[cfg(feature = "parallel")]
fn run_grid<T: Send>(grid: &[f64], f: impl Fn(f64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    grid.par_iter().map(|&g| f(g)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_grid<T>(grid: &[f64], f: impl Fn(f64) -> Result<T>) -> Result<Vec<T>> {
    grid.iter().map(|&g| f(g)).collect()
}

/// One NPC model per training prior weight, each scored at every inference
/// prior weight: `5 x 2` rows.
pub fn gamma_sweep(setup: &SweepSetup) -> Result<Vec<GammaRow>> {
    let (train_corpus, test_corpus) = setup.corpora()?;
    let per_model = run_grid(&GAMMA_TRAIN_GRID, |gamma_train| {
        let config = TrainConfig {
            method: Method::Npc,
            gamma_train,
            ..setup.base.clone()
        };
        let (clf, log) = train(&config, &train_corpus)?;
        GAMMA_INF_GRID
            .iter()
            .map(|&gamma_inf| {
                let e = evaluate(&clf, &test_corpus, gamma_inf, 0.0, &setup.thresholds_ms)?;
                Ok(GammaRow {
                    gamma_train,
                    gamma_inf,
                    metrics: MetricCells::from_report(&e.report, &setup.thresholds_ms),
                    blank_occupancy_train: log.final_blank_occupancy(),
                    blank_occupancy_inf: e.blank_occupancy,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_model.into_iter().flatten().collect())
}

pub fn gamma_csv(rows: &[GammaRow], thresholds: &[f64]) -> String {
    let mut out = format!(
        "gamma_train,gamma_inf,{},blank_occupancy_train,blank_occupancy_inf\n",
        metric_header(thresholds)
    );
    for r in rows {
        let _ = write!(out, "{},{},", r.gamma_train, r.gamma_inf);
        r.metrics.csv(&mut out);
        let _ = writeln!(out, ",{:.6},{:.6}", r.blank_occupancy_train, r.blank_occupancy_inf);
    }
    out
}

/// One PFR model per weight, scored after a per-model offset grid search.
pub fn pfr_sweep(setup: &SweepSetup) -> Result<Vec<PfrRow>> {
    pfr_sweep_over(setup, &LAMBDA_PFR_GRID)
}

pub fn pfr_sweep_over(setup: &SweepSetup, lambdas: &[f64]) -> Result<Vec<PfrRow>> {
    let (train_corpus, test_corpus) = setup.corpora()?;
    let (lo, hi, step) = setup.offset_grid;
    let threshold = setup.primary_threshold();
    run_grid(lambdas, |lambda_pfr| {
        let mut config = TrainConfig {
            method: Method::Pfr,
            ..setup.pfr_base.clone()
        };
        config.pfr.lambda_pfr = lambda_pfr;
        let (clf, log) = train(&config, &train_corpus)?;
        let e = evaluate(&clf, &test_corpus, config.gamma_inf, 0.0, &setup.thresholds_ms)?;
        let search = gridsearch_offset(&e.hyp, &e.reference, (lo, hi), step, threshold)?;
        let best = evaluate(
            &clf,
            &test_corpus,
            config.gamma_inf,
            search.best_offset_ms,
            &setup.thresholds_ms,
        )?;
        Ok(PfrRow {
            lambda_pfr,
            metrics: MetricCells::from_report(&best.report, &setup.thresholds_ms),
            offset_ms: search.best_offset_ms,
            mean_peak_relative_position: e.mean_peak_relative_position.unwrap_or(f64::NAN),
            blank_occupancy_train: log.final_blank_occupancy(),
        })
    })
}

pub fn pfr_csv(rows: &[PfrRow], thresholds: &[f64]) -> String {
    let mut out = format!(
        "lambda_pfr,{},offset_ms,mean_peak_relative_position,blank_occupancy_train\n",
        metric_header(thresholds)
    );
    for r in rows {
        let _ = write!(out, "{},", r.lambda_pfr);
        r.metrics.csv(&mut out);
        let _ = writeln!(
            out,
            ",{},{:.6},{:.6}",
            r.offset_ms, r.mean_peak_relative_position, r.blank_occupancy_train
        );
    }
    out
}
