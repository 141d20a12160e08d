//! Synthetic establishment survey shaped like a job-openings survey:
//! establishments nested in industries, hires counts, and a sample drawn
//! with probability proportional to employment.
//!
//! Employment drives both selection and hires. Industries of large
//! establishments are few in establishments but carry the more dispersed
//! industry effects, so the design is informative at both levels.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use dwpp_core::rng::{self, Purpose};
use dwpp_core::sampling::{inclusion_probabilities, systematic_select};

use crate::io::fmt;

pub const OWNERSHIP: [&str; 2] = ["Private", "Government"];
pub const REGIONS: [&str; 4] = ["Northeast", "South", "Midwest", "West"];
pub const HEADER: [&str; 8] = ["establishment_id", "industry", "ownership", "region", "employment", "hires", "pi", "weight"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JoltsConfig {
    pub n_establishments: usize,
    pub n_industries: usize,
    pub sample_size: usize,
    pub intercept: f64,
    /// Effect of log employment on log hires.
    pub employment_slope: f64,
    pub government_effect: f64,
    /// Effects of South, Midwest and West against Northeast.
    pub region_effects: [f64; 3],
    pub government_share: f64,
    /// Industry log-employment centres run linearly between these values.
    pub log_employment_range: [f64; 2],
    pub log_employment_sd: f64,
    /// Industry shares fall as `exp(-k c_h)` in the log-employment centre
    /// `c_h`, so large-establishment industries hold few establishments.
    pub share_decay: f64,
    /// Industry-effect standard deviation at the small and large ends.
    pub effect_sd_range: [f64; 2],
    pub seed: u64,
}

impl Default for JoltsConfig {
    fn default() -> Self {
        JoltsConfig {
            n_establishments: 20000,
            n_industries: 200,
            sample_size: 2000,
            intercept: -1.0,
            employment_slope: 0.5,
            government_effect: -0.4,
            region_effects: [0.2, -0.1, 0.1],
            government_share: 0.15,
            log_employment_range: [0.5, 3.5],
            log_employment_sd: 0.8,
            share_decay: 1.5,
            effect_sd_range: [0.3, 1.2],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Establishment {
    pub id: usize,
    pub industry: usize,
    pub ownership: usize,
    pub region: usize,
    pub employment: f64,
    pub hires: f64,
    pub pi: f64,
}

impl JoltsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_industries < 2 || self.n_establishments < self.n_industries {
            bail!("need at least two industries and one establishment per industry");
        }
        if self.sample_size == 0 || self.sample_size > self.n_establishments {
            bail!("sample_size must be in 1..=n_establishments");
        }
        if !(0.0..=1.0).contains(&self.government_share) {
            bail!("government_share must be in [0, 1]");
        }
        if self.log_employment_sd < 0.0 || self.effect_sd_range.iter().any(|s| *s < 0.0) {
            bail!("standard deviations must be non-negative");
        }
        Ok(())
    }
}

pub fn industry_label(h: usize) -> String {
    format!("ind{h:03}")
}

/// Sampled establishments in ascending id order.
pub fn generate(config: &JoltsConfig) -> Result<Vec<Establishment>> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, Purpose::Synthetic, 0, 0);
    let g = config.n_industries;
    let lerp = |r: [f64; 2], h: usize| r[0] + (r[1] - r[0]) * h as f64 / (g - 1) as f64;
    let effects: Vec<f64> = (0..g)
        .map(|h| {
            let z: f64 = StandardNormal.sample(&mut rng);
            lerp(config.effect_sd_range, h) * z
        })
        .collect();
    let shares: Vec<f64> = (0..g).map(|h| (-config.share_decay * lerp(config.log_employment_range, h)).exp()).collect();
    let pick = WeightedIndex::new(&shares).context("industry shares")?;
    let mut pop = Vec::with_capacity(config.n_establishments);
    for id in 0..config.n_establishments {
        // Every industry is populated.
        let industry = if id < g { id } else { pick.sample(&mut rng) };
        let ownership = usize::from(rng.random::<f64>() < config.government_share);
        let region = rng.random_range(0..REGIONS.len());
        let z: f64 = StandardNormal.sample(&mut rng);
        let employment = (lerp(config.log_employment_range, industry) + config.log_employment_sd * z).exp().ceil();
        let mut log_mu = config.intercept + config.employment_slope * employment.ln() + effects[industry];
        if ownership == 1 {
            log_mu += config.government_effect;
        }
        if region > 0 {
            log_mu += config.region_effects[region - 1];
        }
        let hires = Poisson::new(log_mu.exp()).context("hires rate")?.sample(&mut rng);
        pop.push(Establishment { id, industry, ownership, region, employment, hires, pi: 0.0 });
    }
    let sizes: Vec<f64> = pop.iter().map(|e| e.employment).collect();
    let pi = inclusion_probabilities(&sizes, config.sample_size)?;
    let chosen = systematic_select(&pi, &mut rng);
    Ok(chosen
        .into_iter()
        .map(|i| Establishment { pi: pi[i], ..pop[i].clone() })
        .collect())
}

pub fn write(sample: &[Establishment], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    w.write_record(HEADER)?;
    for e in sample {
        w.write_record([
            e.id.to_string(),
            industry_label(e.industry),
            OWNERSHIP[e.ownership].to_string(),
            REGIONS[e.region].to_string(),
            fmt(e.employment),
            fmt(e.hires),
            fmt(e.pi),
            fmt(1.0 / e.pi),
        ])?;
    }
    w.flush()?;
    crate::io::validate_csv(path, &HEADER, &["establishment_id", "employment", "hires", "pi", "weight"])
}
