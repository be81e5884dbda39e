//! Parameter sweeps over one axis and summary statistics over their output.

use rayon::prelude::*;

use oblab_core::num::{median, quantile};
use oblab_core::scenarios::{make_scenario, ScenarioConfig};

use crate::diagnostics::{run_diagnostics, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    N,
    Lambda,
    Seed,
    Resolution,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "n" => Ok(Axis::N),
            "lambda" => Ok(Axis::Lambda),
            "seed" => Ok(Axis::Seed),
            "resolution" => Ok(Axis::Resolution),
            other => Err(CliError::Config(format!(
                "unknown sweep axis '{other}' (expected n, lambda, seed, or resolution)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::Lambda => "lambda",
            Axis::Seed => "seed",
            Axis::Resolution => "resolution",
        }
    }
}

fn apply_axis(base: &ScenarioConfig, axis: Axis, value: f64, seed: u64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    match axis {
        Axis::N => cfg.n = value as usize,
        Axis::Lambda => cfg.lambda_rule = Some(format!("{value}")),
        Axis::Seed => cfg.seed = value as u64,
        Axis::Resolution => cfg.grid_resolution = value as usize,
    }
    cfg
}

/// Runs the full diagnostics once per (axis value, seed) pair in parallel
/// and renders the rows in deterministic order. A failing run becomes a row
/// whose numeric fields are empty and whose error column explains why; the
/// sweep itself keeps going.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[f64],
    n_seeds: u64,
) -> Result<String, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one axis value".into()));
    }
    if axis != Axis::Seed && n_seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let n_models = make_scenario(base)
        .map_err(|e| CliError::Config(e.to_string()))?
        .space
        .n_models();

    let combos: Vec<(f64, u64)> = if axis == Axis::Seed {
        values.iter().map(|&v| (v, v as u64)).collect()
    } else {
        values
            .iter()
            .flat_map(|&v| (0..n_seeds).map(move |k| (v, base.seed + k)))
            .collect()
    };

    let mut header = String::from(
        "axis,seed,miss,tv_pi_oracle,tv_pi_selection,tv_selection_oracle,gamma,r,u,rhs_bound",
    );
    for j in 0..n_models {
        header.push_str(&format!(",ln_ratio_{j}"));
    }
    header.push_str(",error\n");

    let rows: Vec<String> = combos
        .par_iter()
        .map(|&(value, seed)| {
            let cfg = apply_axis(base, axis, value, seed);
            match run_diagnostics(&cfg) {
                Ok(rep) => {
                    let mut row = format!(
                        "{value},{seed},{},{},{},{},{},{},{},{}",
                        rep.miss_probability,
                        rep.tv_pi_oracle,
                        rep.tv_pi_selection,
                        rep.tv_selection_oracle,
                        rep.bounds.gamma.0,
                        rep.bounds.r,
                        rep.bounds.u,
                        rep.bounds.rhs_bound.0,
                    );
                    for lr in &rep.log_ratios {
                        row.push_str(&format!(",{}", lr.0));
                    }
                    row.push_str(",\n");
                    row
                }
                Err(e) => {
                    // commas would break the naive CSV layout
                    let msg = e.to_string().replace([',', '\n'], ";");
                    let blanks = ",".repeat(8 + n_models);
                    format!("{value},{seed}{blanks},{msg}\n")
                }
            }
        })
        .collect();

    let mut out = header;
    for row in rows {
        out.push_str(&row);
    }
    Ok(out)
}

/// Per-axis-value median and quartiles of one CSV column.
#[derive(Debug, Clone)]
pub struct SeriesPoint {
    pub x: f64,
    pub label: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub count: usize,
}

pub struct SweepSummary {
    pub misselect: Vec<SeriesPoint>,
    pub tv: Vec<SeriesPoint>,
    pub lnratio: Vec<SeriesPoint>,
    pub failed_rows: usize,
}

fn series_csv(points: &[SeriesPoint], with_label: bool) -> String {
    let mut out = if with_label {
        String::from("x,model,median,q25,q75,count\n")
    } else {
        String::from("x,median,q25,q75,count\n")
    };
    for p in points {
        if with_label {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.x, p.label, p.median, p.q25, p.q75, p.count
            ));
        } else {
            out.push_str(&format!("{},{},{},{},{}\n", p.x, p.median, p.q25, p.q75, p.count));
        }
    }
    out
}

pub fn summary_files(s: &SweepSummary) -> Vec<(&'static str, String)> {
    let mut text = String::new();
    text.push_str("mis-selection probability by axis value (median [q25, q75])\n");
    for p in &s.misselect {
        text.push_str(&format!(
            "  x={}: {:.6e} [{:.6e}, {:.6e}] over {} runs\n",
            p.x, p.median, p.q25, p.q75, p.count
        ));
    }
    text.push_str("total-variation distance to the oracle posterior\n");
    for p in &s.tv {
        text.push_str(&format!(
            "  x={}: {:.6e} [{:.6e}, {:.6e}]\n",
            p.x, p.median, p.q25, p.q75
        ));
    }
    text.push_str("log posterior-mass ratios against the reference model\n");
    for p in &s.lnratio {
        text.push_str(&format!(
            "  x={} model {}: {:.6} [{:.6}, {:.6}]\n",
            p.x, p.label, p.median, p.q25, p.q75
        ));
    }
    text.push_str(&format!("rows with errors: {}\n", s.failed_rows));
    vec![
        ("summary.txt", text),
        ("series_misselect.csv", series_csv(&s.misselect, false)),
        ("series_tv.csv", series_csv(&s.tv, false)),
        ("series_lnratio.csv", series_csv(&s.lnratio, true)),
    ]
}

fn parse_cell(s: &str) -> Option<f64> {
    match s {
        "" => None,
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

fn stats(x: f64, label: &str, vals: &[f64]) -> Option<SeriesPoint> {
    let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    Some(SeriesPoint {
        x,
        label: label.to_string(),
        median: median(&finite),
        q25: quantile(&finite, 0.25),
        q75: quantile(&finite, 0.75),
        count: vals.len(),
    })
}

/// Aggregates a sweep CSV produced by `run_sweep`.
pub fn summarize(csv: &str) -> Result<SweepSummary, CliError> {
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty sweep file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| -> Result<usize, CliError> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Config(format!("sweep file is missing column '{name}'")))
    };
    let (i_axis, i_miss, i_tv, i_err) =
        (idx("axis")?, idx("miss")?, idx("tv_pi_oracle")?, idx("error")?);
    let ratio_cols: Vec<(usize, String)> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("ln_ratio_"))
        .map(|(i, c)| (i, c.trim_start_matches("ln_ratio_").to_string()))
        .collect();

    // keep axis values in first-appearance order, which run_sweep makes
    // identical to the order the user passed
    let mut order: Vec<f64> = Vec::new();
    let mut miss: Vec<Vec<f64>> = Vec::new();
    let mut tv: Vec<Vec<f64>> = Vec::new();
    let mut ratios: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut failed = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Config(format!(
                "sweep row has {} fields, header has {}",
                fields.len(),
                cols.len()
            )));
        }
        if !fields[i_err].is_empty() {
            failed += 1;
            continue;
        }
        let x: f64 = parse_cell(fields[i_axis])
            .ok_or_else(|| CliError::Config(format!("bad axis value '{}'", fields[i_axis])))?;
        let slot = match order.iter().position(|&v| v == x) {
            Some(k) => k,
            None => {
                order.push(x);
                miss.push(Vec::new());
                tv.push(Vec::new());
                ratios.push(vec![Vec::new(); ratio_cols.len()]);
                order.len() - 1
            }
        };
        if let Some(v) = parse_cell(fields[i_miss]) {
            miss[slot].push(v);
        }
        if let Some(v) = parse_cell(fields[i_tv]) {
            tv[slot].push(v);
        }
        for (k, (ci, _)) in ratio_cols.iter().enumerate() {
            if let Some(v) = parse_cell(fields[*ci]) {
                ratios[slot][k].push(v);
            }
        }
    }
    if order.is_empty() {
        return Err(CliError::Config("sweep file has no usable rows".into()));
    }
    let mut summary = SweepSummary {
        misselect: Vec::new(),
        tv: Vec::new(),
        lnratio: Vec::new(),
        failed_rows: failed,
    };
    for (slot, &x) in order.iter().enumerate() {
        if let Some(p) = stats(x, "", &miss[slot]) {
            summary.misselect.push(p);
        }
        if let Some(p) = stats(x, "", &tv[slot]) {
            summary.tv.push(p);
        }
        for (k, (_, label)) in ratio_cols.iter().enumerate() {
            if let Some(p) = stats(x, label, &ratios[slot][k]) {
                summary.lnratio.push(p);
            }
        }
    }
    Ok(summary)
}
