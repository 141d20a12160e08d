//! CSV and JSON files. Every CSV has a header row; optional fields are
//! empty strings. Floats are written in shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use dwpp_core::mcmc::{ParamSummary, PosteriorDraws};
use dwpp_core::montecarlo::{ErrorStats, McReport, SummaryRow};
use dwpp_core::population::{Population, PopulationConfig, Unit};
use dwpp_core::sampling::{SampleGroup, SampleUnit, SurveySample};
use dwpp_core::weights::WeightSet;

pub const POPULATION_HEADER: [&str; 6] = ["unit_id", "y", "x1", "x2", "h", "log_mu"];
pub const GROUPS_HEADER: [&str; 4] = ["h", "size", "gamma1", "gamma2"];
pub const SAMPLE_HEADER: [&str; 10] = ["group", "h", "unit_id", "y", "x1", "pi_g", "pi_cond", "pi_marg", "w_marg", "group_size"];
pub const WEIGHTS_HEADER: [&str; 5] = ["level", "group", "unit_id", "w_raw", "w_norm"];
pub const SUMMARY_HEADER: [&str; 11] = ["method", "parameter", "mean", "sd", "q025", "q25", "q50", "q75", "q975", "rhat", "ess"];
pub const REPORT_HEADER: [&str; 5] = ["scenario", "method", "parameter", "statistic", "value"];
pub const ESTIMATES_HEADER: [&str; 5] = ["scenario", "replicate", "method", "parameter", "estimate"];
pub const FAILURES_HEADER: [&str; 4] = ["scenario", "replicate", "method", "reason"];
pub const FIGURE_HEADER: [&str; 7] = ["scenario", "method", "parameter", "replicate", "estimate", "truth", "error"];

/// Report statistics in row order.
pub const STATISTICS: [&str; 8] = ["truth", "n", "mean", "bias", "mse", "variance", "relative_bias", "nrmse"];

pub fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    csv::Writer::from_path(path).with_context(|| format!("opening {} for writing", path.display()))
}

fn write_rows<const K: usize>(path: &Path, header: [&str; K], rows: impl IntoIterator<Item = [String; K]>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.write_record(&row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Rows of a CSV keyed by column name, after checking that `required`
/// columns exist.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = r
            .headers()
            .with_context(|| format!("reading header of {}", path.display()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.with_context(|| format!("{}: malformed row {}", path.display(), i + 2))?;
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(Table { path: path.to_path_buf(), header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            anyhow!("{}: missing column '{name}' (found: {})", self.path.display(), self.header.join(", "))
        })
    }

    pub fn optional_column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            anyhow!("{}: row {}, column '{}': '{s}' is not a number", self.path.display(), row + 2, self.header[col])
        })
    }

    pub fn opt_f64_at(&self, row: usize, col: Option<usize>) -> Result<Option<f64>> {
        match col {
            Some(c) if !self.rows[row][c].is_empty() => self.f64_at(row, c).map(Some),
            _ => Ok(None),
        }
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            anyhow!("{}: row {}, column '{}': '{s}' is not a non-negative integer", self.path.display(), row + 2, self.header[col])
        })
    }
}

/// Check the header exactly and that `numeric` columns parse on every row.
pub fn validate_csv(path: &Path, header: &[&str], numeric: &[&str]) -> Result<()> {
    let t = Table::read(path)?;
    if t.header != header {
        bail!("{}: header is [{}], expected [{}]", path.display(), t.header.join(","), header.join(","));
    }
    let cols: Vec<usize> = numeric.iter().map(|c| t.column(c)).collect::<Result<_>>()?;
    for (i, row) in t.rows.iter().enumerate() {
        if row.len() != header.len() {
            bail!("{}: row {} has {} fields, expected {}", path.display(), i + 2, row.len(), header.len());
        }
        for &c in &cols {
            if !row[c].is_empty() {
                t.f64_at(i, c)?;
            }
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_population(pop: &Population, dir: &Path) -> Result<()> {
    write_rows(
        &dir.join("population.csv"),
        POPULATION_HEADER,
        pop.units.iter().map(|u| [u.unit_id.to_string(), fmt(u.y), fmt(u.x1), fmt(u.x2), u.h.to_string(), fmt(u.log_mu)]),
    )?;
    write_rows(
        &dir.join("groups.csv"),
        GROUPS_HEADER,
        pop.group_sizes
            .iter()
            .zip(&pop.group_effects)
            .enumerate()
            .map(|(h, (n, g))| [h.to_string(), n.to_string(), fmt(g[0]), fmt(g[1])]),
    )?;
    write_json(&dir.join("population.json"), &pop.config)?;
    validate_csv(&dir.join("population.csv"), &POPULATION_HEADER, &POPULATION_HEADER)?;
    validate_csv(&dir.join("groups.csv"), &GROUPS_HEADER, &GROUPS_HEADER)
}

pub fn read_population(dir: &Path) -> Result<Population> {
    let config: PopulationConfig = read_json(&dir.join("population.json"))?;
    let t = Table::read(&dir.join("population.csv"))?;
    let c: Vec<usize> = POPULATION_HEADER.iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    let mut units = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        units.push(Unit {
            unit_id: t.usize_at(i, c[0])?,
            y: t.f64_at(i, c[1])?,
            x1: t.f64_at(i, c[2])?,
            x2: t.f64_at(i, c[3])?,
            h: t.usize_at(i, c[4])?,
            log_mu: t.f64_at(i, c[5])?,
        });
    }
    let g = Table::read(&dir.join("groups.csv"))?;
    let gc: Vec<usize> = GROUPS_HEADER.iter().map(|n| g.column(n)).collect::<Result<_>>()?;
    let mut group_sizes = Vec::with_capacity(g.rows.len());
    let mut group_effects = Vec::with_capacity(g.rows.len());
    for i in 0..g.rows.len() {
        if g.usize_at(i, gc[0])? != i {
            bail!("{}: groups must be listed in order 0, 1, 2, ...", g.path.display());
        }
        group_sizes.push(g.usize_at(i, gc[1])?);
        group_effects.push([g.f64_at(i, gc[2])?, g.f64_at(i, gc[3])?]);
    }
    let pop = Population { config, units, group_sizes, group_effects };
    if pop.units.len() != pop.group_sizes.iter().sum::<usize>() {
        bail!("{}: unit count does not match the group sizes", dir.display());
    }
    Ok(pop)
}

pub fn write_sample(sample: &SurveySample, path: &Path) -> Result<()> {
    let rows = sample.groups.iter().enumerate().flat_map(|(g, group)| {
        group.units.iter().map(move |u| {
            [
                g.to_string(),
                group.h.to_string(),
                u.unit_id.to_string(),
                fmt(u.y),
                fmt(u.x1),
                fmt_opt(group.pi_g),
                fmt_opt(u.pi_cond),
                fmt(u.pi_marg),
                fmt(u.w_marg),
                group.pop_size.map(|s| s.to_string()).unwrap_or_default(),
            ]
        })
    });
    write_rows(path, SAMPLE_HEADER, rows)?;
    validate_csv(path, &SAMPLE_HEADER, &SAMPLE_HEADER)
}

/// Read a sample written by `write_sample`. Rows of one group must be
/// contiguous.
pub fn read_sample(path: &Path) -> Result<SurveySample> {
    let t = Table::read(path)?;
    let c: Vec<usize> = ["group", "h", "unit_id", "y", "x1", "pi_marg", "w_marg"].iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    let pi_g_col = t.optional_column("pi_g");
    let pi_cond_col = t.optional_column("pi_cond");
    let size_col = t.optional_column("group_size");
    let mut groups: Vec<SampleGroup> = Vec::new();
    let mut last_group = None;
    for i in 0..t.rows.len() {
        let g = t.usize_at(i, c[0])?;
        if last_group != Some(g) {
            if g != groups.len() {
                bail!("{}: row {}: group indices must run 0, 1, 2, ... with each group's rows together", path.display(), i + 2);
            }
            let pop_size = match size_col {
                Some(sc) if !t.rows[i][sc].is_empty() => Some(t.usize_at(i, sc)?),
                _ => None,
            };
            groups.push(SampleGroup { h: t.usize_at(i, c[1])?, pop_size, pi_g: t.opt_f64_at(i, pi_g_col)?, units: Vec::new() });
            last_group = Some(g);
        }
        groups[g].units.push(SampleUnit {
            unit_id: t.usize_at(i, c[2])?,
            y: t.f64_at(i, c[3])?,
            x1: t.f64_at(i, c[4])?,
            pi_cond: t.opt_f64_at(i, pi_cond_col)?,
            pi_marg: t.f64_at(i, c[5])?,
            w_marg: t.f64_at(i, c[6])?,
        });
    }
    let sample = SurveySample { groups, design: None };
    sample.validate().with_context(|| format!("{}", path.display()))?;
    Ok(sample)
}

/// Group rows then unit rows; `unit_ids` label the unit rows in sample
/// order.
pub fn write_weights(ws: &WeightSet, unit_ids: &[Vec<String>], path: &Path) -> Result<()> {
    let groups = ws
        .group_raw
        .iter()
        .zip(&ws.group_w)
        .enumerate()
        .map(|(g, (raw, w))| ["group".to_string(), g.to_string(), String::new(), fmt(*raw), fmt(*w)]);
    let units = ws.unit_raw.iter().zip(&ws.unit_w).zip(unit_ids).enumerate().flat_map(|(g, ((raw, w), ids))| {
        raw.iter()
            .zip(w)
            .zip(ids)
            .map(move |((r, w), id)| ["unit".to_string(), g.to_string(), id.clone(), fmt(*r), fmt(*w)])
    });
    write_rows(path, WEIGHTS_HEADER, groups.chain(units))?;
    validate_csv(path, &WEIGHTS_HEADER, &["group", "w_raw", "w_norm"])
}

/// One row per retained draw: `chain`, `draw`, then one column per
/// parameter.
pub fn write_draws(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(draws.names.iter().cloned());
    w.write_record(&header)?;
    let p = draws.n_params();
    for (c, chain) in draws.chains.iter().enumerate() {
        for (i, row) in chain.chunks_exact(p).enumerate() {
            let mut rec = vec![c.to_string(), i.to_string()];
            rec.extend(row.iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    let names: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    validate_csv(path, &names, &names)
}

pub fn write_summary(summaries: &[(String, ParamSummary)], path: &Path) -> Result<()> {
    write_rows(
        path,
        SUMMARY_HEADER,
        summaries.iter().map(|(method, s)| {
            [
                method.clone(),
                s.name.clone(),
                fmt(s.mean),
                fmt(s.sd),
                fmt(s.q025),
                fmt(s.q25),
                fmt(s.q50),
                fmt(s.q75),
                fmt(s.q975),
                fmt(s.rhat),
                fmt(s.ess),
            ]
        }),
    )?;
    validate_csv(path, &SUMMARY_HEADER, &SUMMARY_HEADER[2..])
}

pub fn read_summary(path: &Path) -> Result<Vec<(String, ParamSummary)>> {
    let t = Table::read(path)?;
    let c: Vec<usize> = SUMMARY_HEADER.iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    (0..t.rows.len())
        .map(|i| {
            let s = ParamSummary {
                name: t.rows[i][c[1]].clone(),
                mean: t.f64_at(i, c[2])?,
                sd: t.f64_at(i, c[3])?,
                q025: t.f64_at(i, c[4])?,
                q25: t.f64_at(i, c[5])?,
                q50: t.f64_at(i, c[6])?,
                q75: t.f64_at(i, c[7])?,
                q975: t.f64_at(i, c[8])?,
                rhat: t.f64_at(i, c[9])?,
                ess: t.f64_at(i, c[10])?,
            };
            Ok((t.rows[i][c[0]].clone(), s))
        })
        .collect()
}

fn stat_values(row: &SummaryRow) -> [f64; 8] {
    let s = &row.stats;
    [row.truth, s.n as f64, s.mean, s.bias, s.mse, s.variance, s.relative_bias, s.nrmse]
}

fn report_rows(report: &McReport) -> impl Iterator<Item = [String; 5]> + '_ {
    report.summary.iter().flat_map(move |row| {
        STATISTICS.iter().zip(stat_values(row)).map(move |(stat, v)| {
            [report.scenario.clone(), row.method.clone(), row.parameter.clone(), stat.to_string(), fmt(v)]
        })
    })
}

/// File names written by `write_report` for one scenario.
pub struct ReportFiles {
    pub report_csv: PathBuf,
    pub estimates_csv: PathBuf,
    pub failures_csv: PathBuf,
    pub figure_csv: PathBuf,
    pub json: PathBuf,
}

impl ReportFiles {
    pub fn new(dir: &Path, scenario: &str) -> ReportFiles {
        ReportFiles {
            report_csv: dir.join(format!("{scenario}_report.csv")),
            estimates_csv: dir.join(format!("{scenario}_estimates.csv")),
            failures_csv: dir.join(format!("{scenario}_failures.csv")),
            figure_csv: dir.join(format!("{scenario}_figure.csv")),
            json: dir.join(format!("{scenario}_report.json")),
        }
    }
}

/// Tidy report CSV, replicate estimates, failures, figure data (estimate
/// minus truth per replicate) and the full report as JSON.
pub fn write_report(report: &McReport, dir: &Path) -> Result<ReportFiles> {
    let files = ReportFiles::new(dir, &report.scenario);
    write_rows(&files.report_csv, REPORT_HEADER, report_rows(report))?;
    write_rows(
        &files.estimates_csv,
        ESTIMATES_HEADER,
        report.estimates.iter().map(|e| {
            [report.scenario.clone(), e.replicate.to_string(), e.method.clone(), e.parameter.clone(), fmt(e.estimate)]
        }),
    )?;
    write_rows(
        &files.failures_csv,
        FAILURES_HEADER,
        report.failures.iter().map(|f| [report.scenario.clone(), f.replicate.to_string(), f.method.clone(), f.reason.clone()]),
    )?;
    let truth = |p: &str| match p {
        "beta0" => report.truth.beta0,
        "beta1" => report.truth.beta1,
        _ => report.truth.sigma_u2,
    };
    write_rows(
        &files.figure_csv,
        FIGURE_HEADER,
        report.estimates.iter().map(|e| {
            let t = truth(&e.parameter);
            [
                report.scenario.clone(),
                e.method.clone(),
                e.parameter.clone(),
                e.replicate.to_string(),
                fmt(e.estimate),
                fmt(t),
                fmt(e.estimate - t),
            ]
        }),
    )?;
    write_json(&files.json, report)?;
    validate_csv(&files.report_csv, &REPORT_HEADER, &["value"])?;
    validate_csv(&files.estimates_csv, &ESTIMATES_HEADER, &["replicate", "estimate"])?;
    validate_csv(&files.failures_csv, &FAILURES_HEADER, &["replicate"])?;
    validate_csv(&files.figure_csv, &FIGURE_HEADER, &["replicate", "estimate", "truth", "error"])?;
    Ok(files)
}

/// Summary rows of a tidy report CSV, in file order.
pub fn read_report_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let t = Table::read(path)?;
    let c: Vec<usize> = REPORT_HEADER.iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    if t.rows.len() % STATISTICS.len() != 0 {
        bail!("{}: expected {} statistics per method and parameter", path.display(), STATISTICS.len());
    }
    let mut out = Vec::new();
    for block in 0..t.rows.len() / STATISTICS.len() {
        let first = block * STATISTICS.len();
        let mut v = [0.0; 8];
        for (k, stat) in STATISTICS.iter().enumerate() {
            let i = first + k;
            if t.rows[i][c[3]] != *stat {
                bail!("{}: row {}: expected statistic '{stat}'", path.display(), i + 2);
            }
            if t.rows[i][c[1]] != t.rows[first][c[1]] || t.rows[i][c[2]] != t.rows[first][c[2]] {
                bail!("{}: row {}: statistics of one method and parameter must be contiguous", path.display(), i + 2);
            }
            v[k] = t.f64_at(i, c[4])?;
        }
        out.push(SummaryRow {
            method: t.rows[first][c[1]].clone(),
            parameter: t.rows[first][c[2]].clone(),
            truth: v[0],
            stats: ErrorStats {
                n: v[1] as usize,
                mean: v[2],
                bias: v[3],
                mse: v[4],
                variance: v[5],
                relative_bias: v[6],
                nrmse: v[7],
            },
        });
    }
    Ok(out)
}
