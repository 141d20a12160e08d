//! Scenario files and bundled presets.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use dwpp_core::montecarlo::ScenarioSpec;

use crate::fit::FitConfig;
use crate::synthetic::JoltsConfig;

pub const PRESETS: [(&str, &str); 7] = [
    ("table1", include_str!("../presets/table1.json")),
    ("fig2_G1250", include_str!("../presets/fig2_G1250.json")),
    ("fig2_G500", include_str!("../presets/fig2_G500.json")),
    ("fig3_pairwise", include_str!("../presets/fig3_pairwise.json")),
    ("fig_indirect", include_str!("../presets/fig_indirect.json")),
    ("g50_collapse", include_str!("../presets/g50_collapse.json")),
    ("jolts", include_str!("../presets/jolts.json")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        anyhow!("unknown preset '{name}' (available: {})", names.join(", "))
    })
}

/// Synthetic establishment data plus the fit to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticJob {
    pub jolts: JoltsConfig,
    pub fit: FitConfig,
}

/// What a config file describes.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Scenarios(Vec<ScenarioSpec>),
    Synthetic(SyntheticJob),
}

pub fn parse_job(text: &str, origin: &str) -> Result<Job> {
    let value: serde_json::Value = serde_json::from_str(text).with_context(|| format!("{origin}: not valid JSON"))?;
    if value.get("jolts").is_some() {
        let job = serde_json::from_value(value).with_context(|| format!("{origin}: invalid synthetic job"))?;
        return Ok(Job::Synthetic(job));
    }
    let scenarios = if value.is_array() {
        serde_json::from_value::<Vec<ScenarioSpec>>(value).with_context(|| format!("{origin}: invalid scenario list"))?
    } else {
        vec![serde_json::from_value::<ScenarioSpec>(value).with_context(|| format!("{origin}: invalid scenario"))?]
    };
    if scenarios.is_empty() {
        bail!("{origin}: scenario list is empty");
    }
    for s in &scenarios {
        s.validate().map_err(|e| anyhow!("{origin}: scenario '{}': {e}", s.name))?;
    }
    Ok(Job::Scenarios(scenarios))
}

/// Load `--config` or `--preset`; exactly one must be given.
pub fn load_job(config: Option<&Path>, preset: Option<&str>) -> Result<Job> {
    match (config, preset) {
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut job = parse_job(&text, &p.display().to_string())?;
            if let Job::Synthetic(s) = &mut job {
                if let Some(d) = &s.fit.data {
                    if d.is_relative() {
                        s.fit.data = Some(p.parent().unwrap_or(Path::new(".")).join(d));
                    }
                }
            }
            Ok(job)
        }
        (None, Some(name)) => parse_job(preset_text(name)?, &format!("preset {name}")),
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (None, None) => bail!("a --config file or a --preset name is required"),
    }
}

pub fn load_scenarios(config: Option<&Path>, preset: Option<&str>) -> Result<Vec<ScenarioSpec>> {
    match load_job(config, preset)? {
        Job::Scenarios(s) => Ok(s),
        Job::Synthetic(_) => bail!("this command needs a scenario; the synthetic establishment job is used by `generate` and `fit`"),
    }
}

/// Apply command-line overrides. A seed override replaces the scenario and
/// population seeds.
pub fn override_scenario(s: &mut ScenarioSpec, seed: Option<u64>, replicates: Option<usize>) {
    if let Some(seed) = seed {
        s.seed = seed;
        s.population.seed = seed;
    }
    if let Some(b) = replicates {
        s.replicates = b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            load_job(None, Some(name)).unwrap_or_else(|e| panic!("{name}: {e:#}"));
        }
    }

    #[test]
    fn indirect_preset_holds_two_scenarios() {
        let s = load_scenarios(None, Some("fig_indirect")).unwrap();
        let g: Vec<usize> = s.iter().map(|s| s.population.n_groups).collect();
        assert_eq!(g, [1250, 500]);
    }

    #[test]
    fn unknown_preset_lists_names() {
        let e = load_job(None, Some("nope")).unwrap_err().to_string();
        assert!(e.contains("table1"), "{e}");
    }

    #[test]
    fn seed_override_wins() {
        let mut s = load_scenarios(None, Some("table1")).unwrap().remove(0);
        override_scenario(&mut s, Some(99), Some(3));
        assert_eq!((s.seed, s.population.seed, s.replicates), (99, 99, 3));
    }
}
