use std::fmt::Write as _;

use super::plot::sweep_svg;
use super::{create_dir, run_pipeline, write_file, PipelineError, Result, RunConfig, TripletRuleConfig, GOLDEN, SEED_MASK};
use crate::metrics::MetricsReport;

/// Seed of sweep run `i`; run 0 keeps the base seed.
pub fn sweep_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add((i as u64).wrapping_mul(GOLDEN)) & SEED_MASK
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Name of the swept parameter, used as the first CSV column.
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `<parameter>,ct,tw,ks,seed` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},ct,tw,ks,seed\n", self.parameter);
        for row in &self.rows {
            let r = &row.report;
            let _ = writeln!(out, "{},{},{},{},{}", row.value, r.ct, r.tw, r.ks, row.seed);
        }
        out
    }

    pub fn to_svg(&self, log_x: bool) -> String {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.value).collect();
        let series = [
            ("CT", self.rows.iter().map(|r| r.report.ct).collect()),
            ("TW", self.rows.iter().map(|r| r.report.tw).collect()),
            ("KS", self.rows.iter().map(|r| r.report.ks).collect()),
        ];
        sweep_svg(&self.parameter, &xs, &series, log_x)
    }
}

fn sweep(
    config: &RunConfig,
    parameter: &str,
    values: &[f64],
    log_x: bool,
    set: impl Fn(&mut RunConfig, f64),
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(PipelineError::Config(format!("{parameter} sweep needs at least one value")));
    }
    create_dir(&config.output_dir)?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut run = config.clone();
        set(&mut run, value);
        run.seed = sweep_seed(config.seed, i);
        run.output_dir = config.output_dir.join(format!("{parameter}_{value}"));
        let (_, report) = run_pipeline(&run)?;
        rows.push(SweepRow {
            value,
            seed: run.seed,
            report,
        });
    }
    let table = SweepTable {
        parameter: parameter.to_string(),
        rows,
    };
    write_file(&config.output_dir.join(format!("sweep_{parameter}.csv")), table.to_csv())?;
    write_file(&config.output_dir.join(format!("sweep_{parameter}.svg")), table.to_svg(log_x))?;
    Ok(table)
}

/// One genie-aided run per `d_c` value (meters).
pub fn sweep_dc(config: &RunConfig, dc_values: &[f64]) -> Result<SweepTable> {
    if !matches!(config.triplets, TripletRuleConfig::Genie { .. }) {
        return Err(PipelineError::Config("sweep-dc requires the genie triplet rule".into()));
    }
    sweep(config, "d_c", dc_values, false, |run, v| {
        if let TripletRuleConfig::Genie { d_c, .. } = &mut run.triplets {
            *d_c = v;
        }
    })
}

/// One simulated-trajectory run per trajectory count `r`.
pub fn sweep_r(config: &RunConfig, r_values: &[usize]) -> Result<SweepTable> {
    if !matches!(config.triplets, TripletRuleConfig::Simtraj { .. }) {
        return Err(PipelineError::Config("sweep-r requires the simtraj triplet rule".into()));
    }
    let values: Vec<f64> = r_values.iter().map(|&r| r as f64).collect();
    sweep(config, "r", &values, true, |run, v| {
        if let TripletRuleConfig::Simtraj { r, .. } = &mut run.triplets {
            *r = v as usize;
        }
    })
}
