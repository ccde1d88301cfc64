//! Success-rate and timing benchmark over a scenario suite.

use std::collections::BTreeMap;
use std::io;
use std::time::Duration;

use rayon::prelude::*;
use serde_json::{json, Value};

use refshift_core::orsop::SolveStatus;

use crate::error::Result;
use crate::generate::{generate_scenarios, GenSpec};
use crate::run::{run_scenario, Clock, RunConfig, Strategy};
use crate::scenario::Scenario;

pub const RESULTS_HEADER: &str = "scenario_id,method,status,elapsed_us,margin,violations,objective_volume";

#[derive(Debug, Clone, PartialEq)]
pub enum Suite {
    Scenarios(Vec<Scenario>),
    Generated(GenSpec),
}

impl Suite {
    pub fn scenarios(self) -> Result<Vec<Scenario>> {
        match self {
            Suite::Scenarios(v) => Ok(v),
            Suite::Generated(spec) => generate_scenarios(&spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub methods: Vec<Strategy>,
    pub run: RunConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { methods: vec![Strategy::Orsop, Strategy::OcrSurrogate], run: RunConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario_id: String,
    pub method: Strategy,
    pub status: SolveStatus,
    pub elapsed: Duration,
    pub margin: f64,
    /// Post-switch violations.
    pub violations: usize,
    pub objective_volume: f64,
    pub deadline_missed: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodStats {
    pub success_count: usize,
    pub failure_count: usize,
    pub times: Vec<Duration>,
    /// Margins of the runs whose solve succeeded.
    pub margins: Vec<f64>,
    pub statuses: BTreeMap<SolveStatus, usize>,
}

impl MethodStats {
    pub fn runs(&self) -> usize {
        self.success_count + self.failure_count
    }

    pub fn success_rate(&self) -> f64 {
        if self.runs() == 0 {
            0.0
        } else {
            self.success_count as f64 / self.runs() as f64
        }
    }

    /// Nearest-rank percentile of the solve times.
    pub fn time_percentile(&self, p: f64) -> Option<Duration> {
        percentile(&self.times, p)
    }
}

pub fn percentile(values: &[Duration], p: f64) -> Option<Duration> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort();
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// Sorted by scenario id, then method.
    pub rows: Vec<BenchRow>,
    pub per_method: BTreeMap<Strategy, MethodStats>,
    pub deadline: Option<Duration>,
    pub clock: Clock,
    pub scenarios: usize,
}

/// Runs every method on every scenario. Scenarios run on the rayon pool;
/// the result does not depend on scheduling.
pub fn run_benchmark(suite: Suite, cfg: &BenchConfig) -> Result<BenchResult> {
    let scenarios = suite.scenarios()?;
    let jobs: Vec<(&Scenario, Strategy)> =
        scenarios.iter().flat_map(|s| cfg.methods.iter().map(move |&m| (s, m))).collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(s, m)| {
            let out = run_scenario(s, m, &cfg.run)?;
            Ok(BenchRow {
                scenario_id: s.id.clone(),
                method: m,
                status: out.report.status,
                elapsed: out.elapsed,
                margin: out.report.margin,
                violations: out.post_switch_violations,
                objective_volume: out.report.objective_volume,
                deadline_missed: out.deadline_missed,
                success: out.success(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (&a.scenario_id, a.method).cmp(&(&b.scenario_id, b.method)));

    let mut per_method: BTreeMap<Strategy, MethodStats> = cfg.methods.iter().map(|&m| (m, MethodStats::default())).collect();
    for r in &rows {
        let st = per_method.entry(r.method).or_default();
        if r.success {
            st.success_count += 1;
        } else {
            st.failure_count += 1;
        }
        st.times.push(r.elapsed);
        if r.status.is_success() {
            st.margins.push(r.margin);
        }
        *st.statuses.entry(r.status).or_insert(0) += 1;
    }
    Ok(BenchResult { rows, per_method, deadline: cfg.run.deadline, clock: cfg.run.clock, scenarios: scenarios.len() })
}

fn micros(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e3
}

impl BenchResult {
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{RESULTS_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.3},{},{},{}",
                r.scenario_id,
                r.method,
                r.status,
                micros(r.elapsed),
                r.margin,
                r.violations,
                r.objective_volume
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Value {
        let mut methods = serde_json::Map::new();
        for (m, st) in &self.per_method {
            let pct = |p: f64| st.time_percentile(p).map(micros);
            let statuses: serde_json::Map<String, Value> =
                st.statuses.iter().map(|(s, c)| (s.as_str().to_string(), json!(c))).collect();
            let margin = if st.margins.is_empty() {
                Value::Null
            } else {
                let min = st.margins.iter().copied().fold(f64::INFINITY, f64::min);
                let max = st.margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = st.margins.iter().sum::<f64>() / st.margins.len() as f64;
                json!({ "min": min, "mean": mean, "max": max })
            };
            methods.insert(
                m.as_str().to_string(),
                json!({
                    "runs": st.runs(),
                    "success_count": st.success_count,
                    "failure_count": st.failure_count,
                    "success_rate": st.success_rate(),
                    "statuses": statuses,
                    "elapsed_us": { "p50": pct(50.0), "p90": pct(90.0), "p99": pct(99.0) },
                    "margin": margin,
                }),
            );
        }
        let mut out = json!({
            "clock": self.clock.as_str(),
            "deadline_ms": self.deadline.map(|d| d.as_secs_f64() * 1e3),
            "scenarios": self.scenarios,
            "methods": methods,
        });
        if let (Some(o), Some(c)) =
            (self.per_method.get(&Strategy::Orsop), self.per_method.get(&Strategy::OcrSurrogate))
        {
            out["success_rate_gain"] = json!(o.success_rate() - c.success_rate());
            if let (Some(a), Some(b)) = (o.time_percentile(50.0), c.time_percentile(50.0)) {
                if !a.is_zero() {
                    out["median_speedup"] = json!(b.as_secs_f64() / a.as_secs_f64());
                }
            }
            out["baseline"] = json!("ocr-surrogate: LQR ladder solved by Kleinman iteration, a stand-in for LMI redesign");
        }
        out
    }
}
