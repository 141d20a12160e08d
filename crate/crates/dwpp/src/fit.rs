//! Fit the weighted random-intercept model to an arbitrary CSV.
//!
//! Rows are grouped by the `group` column in order of first appearance and
//! keep file order within a group. Categorical covariates become indicator
//! columns for every level except the reference, levels sorted.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use dwpp_core::mcmc::{self, McmcConfig, ParamSummary, PosteriorDraws};
use dwpp_core::model::{ModelData, ModelSpec, Priors, WeightedModel};
use dwpp_core::sampling::{SampleGroup, SampleUnit, SurveySample};
use dwpp_core::weights::{self, GroupWeightScheme, NgSource, UnitTarget, WeightSet};

use crate::io::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Covariate {
    pub column: String,
    /// Treat the column as categorical. Implied by `reference`.
    #[serde(default)]
    pub categorical: bool,
    /// Reference level; defaults to the first level in sorted order.
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Data file, relative to the config file's directory.
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub response: String,
    pub group: String,
    /// Marginal unit weight column. One of `weight` and `unit_prob` is
    /// required; with both, `weight` is read as given.
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub unit_prob: Option<String>,
    /// Within-group conditional inclusion probability (two-stage designs).
    #[serde(default)]
    pub unit_cond_prob: Option<String>,
    /// Group inclusion probability, constant within a group.
    #[serde(default)]
    pub group_prob: Option<String>,
    /// Population group size, constant within a group.
    #[serde(default)]
    pub group_size: Option<String>,
    #[serde(default)]
    pub unit_id: Option<String>,
    #[serde(default)]
    pub covariates: Vec<Covariate>,
    #[serde(default = "default_intercept")]
    pub intercept: bool,
    pub schemes: Vec<GroupWeightScheme>,
    #[serde(default)]
    pub unit_target: Option<UnitTarget>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub priors: Priors,
}

fn default_intercept() -> bool {
    true
}

/// A CSV turned into a survey sample plus the model's design matrix.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sample: SurveySample,
    pub data: ModelData,
    pub group_labels: Vec<String>,
    pub unit_labels: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct SchemeFit {
    pub label: String,
    pub weights: WeightSet,
    pub draws: PosteriorDraws,
    pub summary: Vec<ParamSummary>,
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<FitConfig> {
        let mut c: FitConfig = crate::io::read_json(path)?;
        if let Some(d) = &c.data {
            if d.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                c.data = Some(base.join(d));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            bail!("fit config lists no weighting schemes");
        }
        if self.weight.is_none() && self.unit_prob.is_none() {
            bail!("fit config needs \"weight\" or \"unit_prob\" to name the marginal weight column");
        }
        for s in &self.schemes {
            match s {
                GroupWeightScheme::DirectGroup if self.group_prob.is_none() => bail!(
                    "scheme direct_group needs group inclusion probabilities: set \"group_prob\" to a column of the data"
                ),
                GroupWeightScheme::SumWeights { ng_source: NgSource::Known } if self.group_size.is_none() => bail!(
                    "scheme sum_weights with known sizes needs \"group_size\" naming the population group size column"
                ),
                _ => {}
            }
        }
        self.mcmc.validate()?;
        self.priors.validate()?;
        Ok(())
    }
}

fn label_of(s: &GroupWeightScheme) -> &'static str {
    s.label()
}

struct Level {
    column: usize,
    levels: Vec<String>,
    reference: String,
}

pub fn prepare(config: &FitConfig, table: &Table) -> Result<Prepared> {
    config.validate()?;
    let path = table.path.display();
    let y_col = table.column(&config.response)?;
    let g_col = table.column(&config.group)?;
    let w_col = config.weight.as_deref().map(|c| table.column(c)).transpose()?;
    let p_col = config.unit_prob.as_deref().map(|c| table.column(c)).transpose()?;
    let cond_col = config.unit_cond_prob.as_deref().map(|c| table.column(c)).transpose()?;
    let gp_col = config.group_prob.as_deref().map(|c| table.column(c)).transpose()?;
    let gs_col = config.group_size.as_deref().map(|c| table.column(c)).transpose()?;
    let id_col = config.unit_id.as_deref().map(|c| table.column(c)).transpose()?;
    if table.rows.is_empty() {
        bail!("{path}: no data rows");
    }

    let mut names = Vec::new();
    if config.intercept {
        names.push("intercept".to_string());
    }
    let mut plan: Vec<Result<usize, Level>> = Vec::new();
    for cov in &config.covariates {
        let c = table.column(&cov.column)?;
        if cov.categorical || cov.reference.is_some() {
            let levels: Vec<String> = table.rows.iter().map(|r| r[c].clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let reference = match &cov.reference {
                Some(r) if levels.contains(r) => r.clone(),
                Some(r) => bail!("{path}: reference level '{r}' does not occur in column '{}' (levels: {})", cov.column, levels.join(", ")),
                None => levels[0].clone(),
            };
            for l in levels.iter().filter(|l| **l != reference) {
                names.push(format!("{}[{l}]", cov.column));
            }
            plan.push(Err(Level { column: c, levels, reference }));
        } else {
            names.push(cov.column.clone());
            plan.push(Ok(c));
        }
    }
    let p = names.len();
    if p == 0 {
        bail!("model has no columns: enable the intercept or add covariates");
    }

    // Group rows by first appearance.
    let mut group_labels: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let key = row[g_col].clone();
        let g = *index.entry(key.clone()).or_insert_with(|| {
            group_labels.push(key);
            members.push(Vec::new());
            members.len() - 1
        });
        members[g].push(i);
    }

    let mut groups = Vec::with_capacity(members.len());
    let mut unit_labels = Vec::with_capacity(members.len());
    let mut y = Vec::with_capacity(table.rows.len());
    let mut x = Vec::with_capacity(table.rows.len() * p);
    for (g, rows) in members.iter().enumerate() {
        let first = rows[0];
        let constant = |col: Option<usize>, what: &str| -> Result<()> {
            if let Some(c) = col {
                if rows.iter().any(|&i| table.rows[i][c] != table.rows[first][c]) {
                    bail!("{path}: column '{}' must be constant within group '{}' ({what})", table.header[c], group_labels[g]);
                }
            }
            Ok(())
        };
        constant(gp_col, "a group inclusion probability")?;
        constant(gs_col, "a population group size")?;
        let pop_size = match gs_col {
            Some(c) if !table.rows[first][c].is_empty() => Some(table.usize_at(first, c)?),
            _ => None,
        };
        let mut units = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            let (pi_marg, w_marg) = match (w_col, p_col) {
                (Some(wc), Some(pc)) => (table.f64_at(i, pc)?, table.f64_at(i, wc)?),
                (Some(wc), None) => {
                    let w = table.f64_at(i, wc)?;
                    (1.0 / w, w)
                }
                (None, Some(pc)) => {
                    let p = table.f64_at(i, pc)?;
                    (p, 1.0 / p)
                }
                (None, None) => unreachable!("validated"),
            };
            let unit_id = match id_col {
                Some(c) => table.usize_at(i, c)?,
                None => i,
            };
            units.push(SampleUnit {
                unit_id,
                y: table.f64_at(i, y_col)?,
                x1: 0.0, // covariates live in the design matrix
                pi_cond: table.opt_f64_at(i, cond_col)?,
                pi_marg,
                w_marg,
            });
            labels.push(id_col.map(|c| table.rows[i][c].clone()).unwrap_or_else(|| i.to_string()));
            y.push(table.f64_at(i, y_col)?);
            if config.intercept {
                x.push(1.0);
            }
            for item in &plan {
                match item {
                    Ok(c) => x.push(table.f64_at(i, *c)?),
                    Err(level) => {
                        let v = &table.rows[i][level.column];
                        for l in level.levels.iter().filter(|l| **l != level.reference) {
                            x.push(if v == l { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
        groups.push(SampleGroup { h: g, pop_size, pi_g: table.opt_f64_at(first, gp_col)?, units });
        unit_labels.push(labels);
    }
    let sample = SurveySample { groups, design: None };
    sample.validate().map_err(|e| anyhow!("{path}: {e}"))?;
    let sizes: Vec<usize> = sample.groups.iter().map(|g| g.units.len()).collect();
    let data = ModelData::new(y, x, p, &sizes, names).map_err(|e| anyhow!("{path}: {e}"))?;
    Ok(Prepared { sample, data, group_labels, unit_labels })
}

/// Weight set of one scheme, honouring the configured unit target.
pub fn scheme_weights(sample: &SurveySample, scheme: GroupWeightScheme, unit_target: Option<UnitTarget>) -> Result<WeightSet> {
    let built = weights::build_weights(sample, scheme)?;
    Ok(match unit_target {
        Some(t) if t != built.unit_target => weights::normalize(built.group_raw, built.unit_raw, t)?,
        _ => built,
    })
}

/// Run every configured scheme with the same sampler seed.
pub fn run(config: &FitConfig, prepared: &Prepared) -> Result<Vec<SchemeFit>> {
    let spec = ModelSpec { priors: config.priors, intercept: config.intercept.then_some(0) };
    config
        .schemes
        .iter()
        .map(|scheme| {
            let label = label_of(scheme).to_string();
            let ws = scheme_weights(&prepared.sample, *scheme, config.unit_target).with_context(|| format!("building {label} weights"))?;
            let model = WeightedModel::new(&prepared.data, &ws, spec.clone())?;
            let mut draws = mcmc::run_chain(&model, &config.mcmc).with_context(|| format!("sampling under {label}"))?;
            // Name group effects after the data's group labels.
            for (g, name) in prepared.group_labels.iter().enumerate() {
                draws.names[prepared.data.p + g] = format!("u[{name}]");
            }
            let summary = mcmc::summarize(&draws);
            Ok(SchemeFit { label, weights: ws, draws, summary })
        })
        .collect()
}

/// Population variance of the group-effect posterior means.
pub fn effect_mean_variance(fit: &SchemeFit) -> f64 {
    let p = fit.draws.n_beta;
    let means: Vec<f64> = (0..fit.draws.n_groups).map(|g| fit.draws.column_mean(p + g)).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / means.len() as f64
}
