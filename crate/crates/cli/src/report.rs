//! Report structures and JSON/CSV serialization. CSV output is a long-format
//! table (section,key,index,value) whose float cells use the shortest
//! round-trip representation, so re-parsing recovers the values exactly.

use std::io::Write;

use envkit::{BootstrapSummary, EnvelopeEstimate};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "envelope-report/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub command: String,
    pub family: String,
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub predictor_names: Vec<String>,
    pub intercept: Option<f64>,
    pub theta_tilde: Vec<f64>,
    /// Criterion values I_n(k) for k = 0..=p.
    pub criteria: Vec<f64>,
    pub u_hat: usize,
    /// Softmax weights over the candidate range, indexed from its start
    /// (k = 1..=p by default).
    pub weights: Vec<f64>,
    pub theta_w: Vec<f64>,
    pub theta_u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapTables {
    pub theta_w: Vec<f64>,
    pub sd_w: Vec<f64>,
    pub theta_u: Vec<f64>,
    pub sd_varu: Vec<f64>,
    pub sd_fixu: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub sd_mle: Vec<f64>,
    pub ratio_w: Vec<Option<f64>>,
    pub ratio_varu: Vec<Option<f64>>,
    pub ratio_fixu: Vec<Option<f64>>,
    pub u_distribution: Vec<f64>,
    pub replicates_used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    #[serde(flatten)]
    pub fit: FitReport,
    pub b: usize,
    pub seed: u64,
    pub bootstrap: BootstrapTables,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimCellReport {
    pub family: String,
    pub setting: String,
    pub n: usize,
    pub ratio_w: Vec<Option<f64>>,
    pub ratio_varu: Vec<Option<f64>>,
    pub ratio_fixu: Vec<Option<f64>>,
    pub u_distribution: Vec<f64>,
    pub replicates_used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub schema: String,
    pub command: String,
    pub b: usize,
    pub seed: u64,
    pub cells: Vec<SimCellReport>,
}

pub fn fit_report(
    est: &EnvelopeEstimate,
    family: &str,
    method: &str,
    n: usize,
    predictor_names: Vec<String>,
    has_intercept: bool,
) -> FitReport {
    let p = est.theta_w.len();
    FitReport {
        schema: SCHEMA.to_string(),
        command: "fit".to_string(),
        family: family.to_string(),
        method: method.to_string(),
        n,
        p,
        predictor_names,
        intercept: has_intercept.then_some(est.glm.intercept),
        theta_tilde: est.glm.coefficients.clone(),
        criteria: est.criteria.values.clone(),
        u_hat: est.u_hat,
        weights: est.weights.weights.clone(),
        theta_w: est.theta_w.iter().copied().collect(),
        theta_u: est.theta_u.iter().copied().collect(),
    }
}

pub fn bootstrap_tables(est: &EnvelopeEstimate, summary: &BootstrapSummary) -> BootstrapTables {
    BootstrapTables {
        theta_w: est.theta_w.iter().copied().collect(),
        sd_w: summary.sd_w.clone(),
        theta_u: est.theta_u.iter().copied().collect(),
        sd_varu: summary.sd_varu.clone(),
        sd_fixu: summary.sd_fixu.clone(),
        theta_tilde: est.glm.coefficients.clone(),
        sd_mle: summary.sd_mle.clone(),
        ratio_w: summary.ratio_w.clone(),
        ratio_varu: summary.ratio_varu.clone(),
        ratio_fixu: summary.ratio_fixu.clone(),
        u_distribution: summary.u_distribution.clone(),
        replicates_used: summary.replicates_used,
        skipped: summary.skipped,
    }
}

/// One long-format CSV row.
fn row<W: Write>(
    w: &mut csv::Writer<W>,
    section: &str,
    key: &str,
    index: Option<usize>,
    value: String,
) -> csv::Result<()> {
    let idx = index.map(|i| i.to_string()).unwrap_or_default();
    w.write_record([section, key, &idx, &value])
}

fn vec_rows<W: Write>(
    w: &mut csv::Writer<W>,
    section: &str,
    key: &str,
    v: &[f64],
) -> csv::Result<()> {
    for (i, x) in v.iter().enumerate() {
        row(w, section, key, Some(i), format!("{x}"))?;
    }
    Ok(())
}

fn opt_rows<W: Write>(
    w: &mut csv::Writer<W>,
    section: &str,
    key: &str,
    v: &[Option<f64>],
) -> csv::Result<()> {
    for (i, x) in v.iter().enumerate() {
        let cell = x.map(|x| format!("{x}")).unwrap_or_else(|| "NA".into());
        row(w, section, key, Some(i), cell)?;
    }
    Ok(())
}

fn fit_rows<W: Write>(w: &mut csv::Writer<W>, r: &FitReport) -> csv::Result<()> {
    row(w, "meta", "schema", None, r.schema.clone())?;
    row(w, "meta", "command", None, r.command.clone())?;
    row(w, "meta", "family", None, r.family.clone())?;
    row(w, "meta", "method", None, r.method.clone())?;
    row(w, "meta", "n", None, r.n.to_string())?;
    row(w, "meta", "p", None, r.p.to_string())?;
    for (i, name) in r.predictor_names.iter().enumerate() {
        row(w, "meta", "predictor", Some(i), name.clone())?;
    }
    if let Some(b0) = r.intercept {
        row(w, "estimate", "intercept", None, format!("{b0}"))?;
    }
    vec_rows(w, "estimate", "theta_tilde", &r.theta_tilde)?;
    vec_rows(w, "criteria", "value", &r.criteria)?;
    row(w, "selection", "u_hat", None, r.u_hat.to_string())?;
    vec_rows(w, "selection", "weight", &r.weights)?;
    vec_rows(w, "estimate", "theta_w", &r.theta_w)?;
    vec_rows(w, "estimate", "theta_u", &r.theta_u)?;
    Ok(())
}

pub fn fit_to_csv(r: &FitReport) -> Result<String, Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "index", "value"])?;
    fit_rows(&mut w, r)?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn bootstrap_to_csv(r: &BootstrapReport) -> Result<String, Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "index", "value"])?;
    fit_rows(&mut w, &r.fit)?;
    row(&mut w, "bootstrap", "B", None, r.b.to_string())?;
    row(&mut w, "bootstrap", "seed", None, r.seed.to_string())?;
    let t = &r.bootstrap;
    vec_rows(&mut w, "bootstrap", "sd_w", &t.sd_w)?;
    vec_rows(&mut w, "bootstrap", "sd_varu", &t.sd_varu)?;
    vec_rows(&mut w, "bootstrap", "sd_fixu", &t.sd_fixu)?;
    vec_rows(&mut w, "bootstrap", "sd_mle", &t.sd_mle)?;
    opt_rows(&mut w, "bootstrap", "ratio_w", &t.ratio_w)?;
    opt_rows(&mut w, "bootstrap", "ratio_varu", &t.ratio_varu)?;
    opt_rows(&mut w, "bootstrap", "ratio_fixu", &t.ratio_fixu)?;
    vec_rows(&mut w, "bootstrap", "u_distribution", &t.u_distribution)?;
    row(&mut w, "bootstrap", "replicates_used", None, t.replicates_used.to_string())?;
    row(&mut w, "bootstrap", "skipped", None, t.skipped.to_string())?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn simulate_to_csv(r: &SimulateReport) -> Result<String, Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "index", "value"])?;
    row(&mut w, "meta", "schema", None, r.schema.clone())?;
    row(&mut w, "meta", "command", None, r.command.clone())?;
    row(&mut w, "meta", "B", None, r.b.to_string())?;
    row(&mut w, "meta", "seed", None, r.seed.to_string())?;
    for (c, cell) in r.cells.iter().enumerate() {
        let sec = format!("cell{c}");
        row(&mut w, &sec, "family", None, cell.family.clone())?;
        row(&mut w, &sec, "setting", None, cell.setting.clone())?;
        row(&mut w, &sec, "n", None, cell.n.to_string())?;
        opt_rows(&mut w, &sec, "ratio_w", &cell.ratio_w)?;
        opt_rows(&mut w, &sec, "ratio_varu", &cell.ratio_varu)?;
        opt_rows(&mut w, &sec, "ratio_fixu", &cell.ratio_fixu)?;
        vec_rows(&mut w, &sec, "u_distribution", &cell.u_distribution)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
