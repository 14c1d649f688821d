//! Configuration and the stages behind the `rdi-msm` command line:
//! simulate, derive, weights, fit and effects.

use crate::covariates::{derive, read_derived_csv, write_derived_csv, DerivedError, Exposure};
use crate::data::{apply_eligibility, read_patients, write_patients, ConsortSummary, DataError, Schema};
use crate::effects::{
    bootstrap_plan, monthly_grid, run_bootstrap, BootstrapOutput, CateResult, EffectsError, MsmSettings,
    ReplicateWeights, CONTRASTS,
};
use crate::glm::{GlmError, KnotRule};
use crate::iptw::{
    balance_table, stabilized_weights, weight_diagnostics, BalanceTable, Cohort, DiagnosticThresholds,
    IptwError, StabilizedWeights, WeightDiagnostics, WeightOptions, WeightSpec, SMD_FORMULA,
};
use crate::simulator::{simulate, SimConfig, SimError, SimOutput, SimTruth};
use crate::survival::{predict_survival, CoxFit, CoxOptions, SurvivalError, TieMethod};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DERIVED_FILE: &str = "derived.csv";
pub const CONSORT_FILE: &str = "consort.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const COXFIT_FILE: &str = "coxfit.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CATE_FILE: &str = "cate.csv";
pub const REPLICATES_FILE: &str = "replicates.csv";
pub const TRUTH_FILE: &str = "truth.json";
/// Simulated datasets are written here, below the output directory.
pub const SIMULATED_DATA_DIR: &str = "data";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Derived(#[from] DerivedError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Weights(#[from] IptwError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Effects(#[from] EffectsError),
}

impl PipelineError {
    /// 1 for invalid input or configuration, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Survival(_) | PipelineError::Effects(_) => 2,
            PipelineError::Weights(IptwError::MissingField { .. } | IptwError::UnknownSpec(_)) => 1,
            PipelineError::Weights(_) => 2,
            PipelineError::Simulation(SimError::PositivityFloorViolated { .. }) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    /// Directory of long-format CSVs, or a single wide CSV.
    pub path: PathBuf,
    #[serde(default)]
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub replicate_weights: ReplicateWeights,
    pub store_replicates: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 2024,
            replicate_weights: ReplicateWeights::default(),
            store_replicates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Option<InputConfig>,
    pub simulate: Option<SimConfig>,
    pub weight_spec: String,
    pub knot_rule: KnotRule,
    pub weights: WeightOptions,
    pub bootstrap: BootstrapConfig,
    pub horizon_months: u32,
    /// Defaults to every month from 1 to the horizon.
    pub time_grid: Option<Vec<f64>>,
    pub ties: TieMethod,
    pub diagnostics: DiagnosticThresholds,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            simulate: None,
            weight_spec: "iptw1".into(),
            knot_rule: KnotRule::default(),
            weights: WeightOptions::default(),
            bootstrap: BootstrapConfig::default(),
            horizon_months: 60,
            time_grid: None,
            ties: TieMethod::Breslow,
            diagnostics: DiagnosticThresholds::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PipelineError + '_ {
    move |source| PipelineError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bootstrap.replicates == 0 {
            return Err(PipelineError::Config("bootstrap.replicates must be at least 1".into()));
        }
        if self.horizon_months == 0 {
            return Err(PipelineError::Config("horizon_months must be positive".into()));
        }
        if let Some(grid) = &self.time_grid {
            if grid.is_empty() || grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(PipelineError::Config("time_grid must hold positive times".into()));
            }
        }
        if let Some(input) = &self.input {
            if !input.path.exists() {
                return Err(PipelineError::Config(format!(
                    "input path {} does not exist",
                    input.path.display()
                )));
            }
        }
        if let Some(sim) = &self.simulate {
            sim.validate()?;
        }
        self.spec()?;
        Ok(())
    }

    /// The selected weight specification with the configured knot rule.
    pub fn spec(&self) -> Result<WeightSpec> {
        let mut spec = WeightSpec::by_id(&self.weight_spec)?;
        spec.knot_rule = self.knot_rule.clone();
        Ok(spec)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.time_grid.clone().unwrap_or_else(|| monthly_grid(self.horizon_months))
    }

    pub fn cox_options(&self) -> CoxOptions {
        CoxOptions {
            ties: self.ties,
            ..Default::default()
        }
    }

    fn out(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    fn ensure_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir).map_err(io_err(&self.output_dir))
    }

    /// Where patient records are read from.
    pub fn data_source(&self) -> Result<(PathBuf, Schema)> {
        match (&self.input, &self.simulate) {
            (Some(input), _) => Ok((input.path.clone(), input.schema)),
            (None, Some(_)) => Ok((self.out(SIMULATED_DATA_DIR), Schema::Long)),
            (None, None) => Err(PipelineError::Config("either `input` or `simulate` must be given".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth: SimTruth,
    pub config: SimConfig,
    pub exclusions: Vec<(String, String)>,
}

/// Simulates a dataset into `<output_dir>/data` and writes truth.json.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimOutput> {
    let sim_cfg = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| PipelineError::Config("`simulate` block missing".into()))?;
    let out = simulate(sim_cfg)?;
    cfg.ensure_output_dir()?;
    let dir = cfg.out(SIMULATED_DATA_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_patients(&dir, Schema::Long, &out.records)?;
    write_json(
        &cfg.out(TRUTH_FILE),
        &TruthFile {
            truth: out.truth.clone(),
            config: sim_cfg.clone(),
            exclusions: out
                .exclusions
                .iter()
                .map(|(id, r)| (id.clone(), r.label().to_string()))
                .collect(),
        },
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveOutput {
    pub consort: ConsortSummary,
    pub derived: Vec<crate::covariates::DerivedCovariates>,
}

/// Eligibility and covariate derivation: consort.json and derived.csv.
pub fn cmd_derive(cfg: &PipelineConfig) -> Result<DeriveOutput> {
    let (path, schema) = cfg.data_source()?;
    let records = read_patients(&path, schema)?;
    let eligibility = apply_eligibility(records);
    let consort = eligibility.consort();
    let derived = eligibility
        .eligible
        .iter()
        .map(derive)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    cfg.ensure_output_dir()?;
    write_json(&cfg.out(CONSORT_FILE), &consort)?;
    let p = cfg.out(DERIVED_FILE);
    write_derived_csv(&p, &derived).map_err(csv_err(&p))?;
    Ok(DeriveOutput { consort, derived })
}

/// Eligible cohort rebuilt from the records and derived.csv.
pub fn load_cohort(cfg: &PipelineConfig) -> Result<Cohort> {
    let (path, schema) = cfg.data_source()?;
    let records = read_patients(&path, schema)?;
    let p = cfg.out(DERIVED_FILE);
    if !p.exists() {
        return Err(PipelineError::Config(format!("{} not found; run `derive` first", p.display())));
    }
    let derived = read_derived_csv(&p).map_err(csv_err(&p))?;
    Ok(Cohort::join(&records, &derived)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    pub spec: String,
    pub selected: bool,
    pub error: Option<String>,
    pub diagnostics: Option<WeightDiagnostics>,
    pub balance: Option<BalanceTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub selected: String,
    pub thresholds: DiagnosticThresholds,
    pub smd_formula: String,
    pub unweighted_balance: Option<BalanceTable>,
    pub specs: Vec<SpecReport>,
}

#[derive(Serialize, Deserialize)]
struct WeightRow {
    id: String,
    spec: String,
    sw: f64,
}

/// Fits all five specifications, writing weights.csv and diagnostics.json.
/// A failing specification is recorded and the others continue.
pub fn cmd_weights(cfg: &PipelineConfig) -> Result<DiagnosticsReport> {
    let cohort = load_cohort(cfg)?;
    let selected = cfg.spec()?;
    let specs: Vec<WeightSpec> = WeightSpec::standard()
        .into_iter()
        .map(|mut s| {
            s.knot_rule = cfg.knot_rule.clone();
            s
        })
        .collect();
    let fits: Vec<std::result::Result<StabilizedWeights, IptwError>> = specs
        .par_iter()
        .map(|s| stabilized_weights(s, &cohort, &cfg.weights))
        .collect();

    cfg.ensure_output_dir()?;
    let wpath = cfg.out(WEIGHTS_FILE);
    let mut writer = csv::Writer::from_path(&wpath).map_err(csv_err(&wpath))?;
    let mut reports = Vec::new();
    for (spec, fit) in specs.iter().zip(&fits) {
        let is_selected = spec.id == selected.id;
        match fit {
            Ok(w) => {
                for (s, &sw) in cohort.subjects().iter().zip(&w.weights) {
                    writer
                        .serialize(WeightRow {
                            id: s.id.clone(),
                            spec: spec.id.clone(),
                            sw,
                        })
                        .map_err(csv_err(&wpath))?;
                }
                let (balance, error) = match balance_table(&cohort, Some(w)) {
                    Ok(b) => (Some(b), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                reports.push(SpecReport {
                    spec: spec.id.clone(),
                    selected: is_selected,
                    error,
                    diagnostics: Some(weight_diagnostics(w, &cohort, &cfg.diagnostics)),
                    balance,
                });
            }
            Err(e) => reports.push(SpecReport {
                spec: spec.id.clone(),
                selected: is_selected,
                error: Some(e.to_string()),
                diagnostics: None,
                balance: None,
            }),
        }
    }
    writer.flush().map_err(io_err(&wpath))?;
    let report = DiagnosticsReport {
        selected: selected.id,
        thresholds: cfg.diagnostics,
        smd_formula: SMD_FORMULA.into(),
        unweighted_balance: balance_table(&cohort, None).ok(),
        specs: reports,
    };
    write_json(&cfg.out(DIAGNOSTICS_FILE), &report)?;
    Ok(report)
}

/// Selected-spec weights from weights.csv, in cohort order.
pub fn load_weights(cfg: &PipelineConfig, cohort: &Cohort) -> Result<Vec<f64>> {
    let spec = cfg.spec()?;
    let p = cfg.out(WEIGHTS_FILE);
    if !p.exists() {
        return Err(PipelineError::Config(format!("{} not found; run `weights` first", p.display())));
    }
    let mut reader = csv::Reader::from_path(&p).map_err(csv_err(&p))?;
    let mut by_id = HashMap::new();
    for row in reader.deserialize::<WeightRow>() {
        let row = row.map_err(csv_err(&p))?;
        if row.spec == spec.id {
            by_id.insert(row.id, row.sw);
        }
    }
    cohort
        .subjects()
        .iter()
        .map(|s| {
            by_id.get(&s.id).copied().ok_or_else(|| {
                PipelineError::Config(format!(
                    "no {} weight for patient {} in {} (did the spec fail?)",
                    spec.id,
                    s.id,
                    p.display()
                ))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSummary {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub model_se: Vec<f64>,
    pub robust_se: Vec<f64>,
    /// Estimate ± 1.96 robust SE.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub model_covariance: Vec<Vec<f64>>,
    pub robust_covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    pub n_events: usize,
}

impl From<&CoxFit> for CoxSummary {
    fn from(f: &CoxFit) -> Self {
        let ci = f.robust_ci();
        Self {
            terms: f.names.clone(),
            coefficients: f.coefficients.clone(),
            model_se: f.model_se(),
            robust_se: f.robust_se(),
            ci_lower: ci.iter().map(|c| c.0).collect(),
            ci_upper: ci.iter().map(|c| c.1).collect(),
            model_covariance: f.model_covariance.clone(),
            robust_covariance: f.robust_covariance.clone(),
            log_likelihood: f.log_likelihood,
            iterations: f.iterations,
            converged: f.converged,
            n: f.n,
            n_events: f.n_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxReport {
    pub spec: String,
    pub ties: TieMethod,
    pub weighted: CoxSummary,
    pub unweighted: CoxSummary,
}

#[derive(Serialize)]
struct CurveRow {
    a: u8,
    v: u8,
    time: f64,
    survival: f64,
}

/// Weighted MSM and unweighted Cox fits (coxfit.json) plus the six
/// counterfactual survival curves of the weighted fit (curves.csv).
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<CoxReport> {
    let cohort = load_cohort(cfg)?;
    let weights = load_weights(cfg, &cohort)?;
    let opts = cfg.cox_options();
    let weighted = crate::effects::fit_msm(&cohort, &weights, &opts)?;
    let unweighted = crate::effects::fit_msm(&cohort, &vec![1.0; cohort.len()], &opts)?;
    cfg.ensure_output_dir()?;
    let report = CoxReport {
        spec: cfg.spec()?.id,
        ties: cfg.ties,
        weighted: CoxSummary::from(&weighted),
        unweighted: CoxSummary::from(&unweighted),
    };
    write_json(&cfg.out(COXFIT_FILE), &report)?;
    let p = cfg.out(CURVES_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    for a in Exposure::ALL {
        for v in [0u8, 1] {
            let curve = predict_survival(&weighted, a, v);
            let rows = std::iter::once((0.0, 1.0)).chain(curve.times().iter().copied().zip(curve.values().iter().copied()));
            for (time, survival) in rows {
                w.serialize(CurveRow {
                    a: a.into(),
                    v,
                    time,
                    survival,
                })
                .map_err(csv_err(&p))?;
            }
        }
    }
    w.flush().map_err(io_err(&p))?;
    Ok(report)
}

#[derive(Serialize)]
struct CateRow {
    a: u8,
    v: u8,
    t: f64,
    estimate: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct ReplicateRow {
    b: usize,
    a: u8,
    v: u8,
    t: f64,
    value: f64,
}

/// CATE point estimates with percentile bootstrap intervals (cate.csv).
pub fn cmd_effects(cfg: &PipelineConfig) -> Result<(Vec<CateResult>, BootstrapOutput)> {
    let cohort = load_cohort(cfg)?;
    let weights = load_weights(cfg, &cohort)?;
    let plan = bootstrap_plan(
        &cohort.exposures(),
        &cohort.effect_modifiers(),
        &weights,
        cfg.bootstrap.replicates,
        cfg.bootstrap.seed,
    )?;
    let settings = MsmSettings {
        cox: cfg.cox_options(),
        grid: cfg.grid(),
        spec: cfg.spec()?,
        weight_options: cfg.weights.clone(),
        replicate_weights: cfg.bootstrap.replicate_weights,
    };
    let (_, out) = run_bootstrap(&cohort, &weights, &plan, &settings)?;
    cfg.ensure_output_dir()?;
    let p = cfg.out(CATE_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    for r in &out.results {
        for k in 0..r.times.len() {
            w.serialize(CateRow {
                a: r.a,
                v: r.v,
                t: r.times[k],
                estimate: r.estimate[k],
                lower: r.lower[k],
                upper: r.upper[k],
            })
            .map_err(csv_err(&p))?;
        }
    }
    w.flush().map_err(io_err(&p))?;
    if cfg.bootstrap.store_replicates {
        let p = cfg.out(REPLICATES_FILE);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
        let grid = &settings.grid;
        for (b, rep) in out.replicates.iter().enumerate() {
            let Some(values) = rep else { continue };
            for (c, &(a, v)) in CONTRASTS.iter().enumerate() {
                for (k, &t) in grid.iter().enumerate() {
                    w.serialize(ReplicateRow {
                        b,
                        a: a.into(),
                        v,
                        t,
                        value: values[c * grid.len() + k],
                    })
                    .map_err(csv_err(&p))?;
                }
            }
        }
        w.flush().map_err(io_err(&p))?;
    }
    Ok((out.results.clone(), out))
}

/// simulate (when configured without input) → derive → weights → fit →
/// effects.
pub fn cmd_all(cfg: &PipelineConfig) -> Result<()> {
    if cfg.input.is_none() && cfg.simulate.is_some() {
        cmd_simulate(cfg)?;
    }
    cmd_derive(cfg)?;
    cmd_weights(cfg)?;
    cmd_fit(cfg)?;
    cmd_effects(cfg)?;
    Ok(())
}

impl From<GlmError> for PipelineError {
    fn from(e: GlmError) -> Self {
        PipelineError::Weights(IptwError::Glm(e))
    }
}
