//! Subcommand bodies. Each returns the warnings that `--strict` escalates.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context, Result};

use dwpp_core::montecarlo::{Method, ScenarioSpec};
use dwpp_core::population::{generate_population_with, Population};
use dwpp_core::rng::{self, Purpose};
use dwpp_core::sampling::{draw_sample_with, SurveySample};
use dwpp_core::weights::GroupWeightScheme;

use crate::config::{self, Job, SyntheticJob};
use crate::fit::{self, Covariate, FitConfig};
use crate::{io, study, synthetic};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub verbose: u8,
}

fn scenario_dir(out: &Path, s: &ScenarioSpec, many: bool) -> PathBuf {
    if many {
        out.join(&s.name)
    } else {
        out.to_path_buf()
    }
}

/// Population of replicate `replicate`, as drawn inside a study.
pub fn replicate_population(s: &ScenarioSpec, replicate: u64) -> Result<Population> {
    Ok(generate_population_with(&s.population, &mut rng::stream(s.seed, Purpose::Population, replicate, 0))?)
}

pub fn replicate_sample(s: &ScenarioSpec, pop: &Population, replicate: u64) -> Result<SurveySample> {
    Ok(draw_sample_with(pop, &s.design, &mut rng::stream(s.seed, Purpose::Design, replicate, 0))?)
}

pub fn replicate_control(s: &ScenarioSpec, pop: &Population, replicate: u64) -> Result<SurveySample> {
    Ok(draw_sample_with(pop, &s.control(), &mut rng::stream(s.seed, Purpose::ControlDesign, replicate, 0))?)
}

fn synthetic_with_seed(mut job: SyntheticJob, seed: Option<u64>) -> SyntheticJob {
    if let Some(seed) = seed {
        job.jolts.seed = seed;
        job.fit.mcmc.seed = seed;
    }
    job
}

pub fn generate(c: &Common, replicate: u64) -> Result<Vec<String>> {
    match config::load_job(c.config.as_deref(), c.preset.as_deref())? {
        Job::Synthetic(job) => {
            let job = synthetic_with_seed(job, c.seed);
            let data = synthetic::generate(&job.jolts)?;
            std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
            let csv = c.out.join("jolts.csv");
            synthetic::write(&data, &csv)?;
            let fit = FitConfig { data: Some("jolts.csv".into()), ..job.fit };
            io::write_json(&c.out.join("jolts_fit.json"), &fit)?;
            println!("wrote {} sampled establishments to {}", data.len(), csv.display());
        }
        Job::Scenarios(mut scenarios) => {
            let many = scenarios.len() > 1;
            for s in &mut scenarios {
                config::override_scenario(s, c.seed, None);
                let dir = scenario_dir(&c.out, s, many);
                let pop = replicate_population(s, replicate)?;
                io::write_population(&pop, &dir)?;
                println!("wrote {} units in {} groups to {}", pop.n_units(), pop.n_groups(), dir.display());
            }
        }
    }
    Ok(Vec::new())
}

/// Fit config that reproduces a scenario's weighted posterior fits on an
/// exported sample.
pub fn sample_fit_config(s: &ScenarioSpec, data: &str) -> FitConfig {
    let schemes: Vec<GroupWeightScheme> = s
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::SingleWeighting => Some(GroupWeightScheme::SingleWeighting),
            Method::DoubleWeighting { scheme } => Some(*scheme),
            _ => None,
        })
        .collect();
    FitConfig {
        data: Some(data.into()),
        response: "y".into(),
        group: "group".into(),
        weight: Some("w_marg".into()),
        unit_prob: Some("pi_marg".into()),
        unit_cond_prob: Some("pi_cond".into()),
        group_prob: s.design.is_two_stage().then(|| "pi_g".into()),
        group_size: Some("group_size".into()),
        unit_id: Some("unit_id".into()),
        covariates: vec![Covariate { column: "x1".into(), categorical: false, reference: None }],
        intercept: true,
        schemes: if schemes.is_empty() { vec![GroupWeightScheme::SingleWeighting] } else { schemes },
        unit_target: s.unit_target,
        mcmc: s.mcmc.clone(),
        priors: s.model.priors,
    }
}

pub fn sample(c: &Common, population: Option<&Path>, replicate: u64) -> Result<Vec<String>> {
    let mut scenarios = config::load_scenarios(c.config.as_deref(), c.preset.as_deref())?;
    let many = scenarios.len() > 1;
    if many && population.is_some() {
        bail!("--population applies to a single scenario; the config holds {}", scenarios.len());
    }
    for s in &mut scenarios {
        config::override_scenario(s, c.seed, None);
        let dir = scenario_dir(&c.out, s, many);
        let pop = match population {
            Some(p) => io::read_population(p)?,
            None => replicate_population(s, replicate)?,
        };
        let sample = replicate_sample(s, &pop, replicate)?;
        io::write_sample(&sample, &dir.join("sample.csv"))?;
        if s.methods.contains(&Method::SrsUnweighted) {
            io::write_sample(&replicate_control(s, &pop, replicate)?, &dir.join("control_sample.csv"))?;
        }
        let fit = sample_fit_config(s, "sample.csv");
        let ids: Vec<Vec<String>> = sample.groups.iter().map(|g| g.units.iter().map(|u| u.unit_id.to_string()).collect()).collect();
        for scheme in &fit.schemes {
            let ws = fit::scheme_weights(&sample, *scheme, fit.unit_target)?;
            io::write_weights(&ws, &ids, &dir.join(format!("weights_{}.csv", scheme.label())))?;
        }
        io::write_json(&dir.join("sample_fit.json"), &fit)?;
        println!("wrote {} units in {} groups to {}", sample.n_total(), sample.n_groups(), dir.display());
    }
    Ok(Vec::new())
}

pub fn fit(c: &Common, data: Option<&Path>) -> Result<Vec<String>> {
    let mut config = match (&c.config, &c.preset) {
        (Some(p), None) => match config::load_job(Some(p), None) {
            Ok(Job::Synthetic(job)) => job.fit,
            // A plain fit config is the common case.
            _ => FitConfig::load(p)?,
        },
        (None, Some(_)) => match config::load_job(None, c.preset.as_deref())? {
            Job::Synthetic(job) => job.fit,
            Job::Scenarios(_) => bail!("fit presets must describe a fit; scenario presets go to `simulate`"),
        },
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (None, None) => bail!("fit needs --config <fit.json>"),
    };
    if let Some(seed) = c.seed {
        config.mcmc.seed = seed;
    }
    let path = match data {
        Some(d) => d.to_path_buf(),
        None => config.data.clone().context("no data file: set \"data\" in the fit config or pass --data")?,
    };
    let table = io::Table::read(&path)?;
    let prepared = fit::prepare(&config, &table)?;
    let fits = fit::run(&config, &prepared)?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for f in &fits {
        io::write_draws(&f.draws, &c.out.join(format!("draws_{}.csv", f.label)))?;
        io::write_weights(&f.weights, &prepared.unit_labels, &c.out.join(format!("weights_{}.csv", f.label)))?;
        for s in &f.summary {
            if s.rhat > 1.1 {
                warnings.push(format!("{}: {} has split R-hat {:.3}", f.label, s.name, s.rhat));
            }
        }
        rows.extend(f.summary.iter().map(|s| (f.label.clone(), s.clone())));
    }
    io::write_summary(&rows, &c.out.join("summary.csv"))?;
    println!("{} units in {} groups from {}", prepared.data.n_units(), prepared.data.n_groups(), path.display());
    for f in &fits {
        println!("{}", f.label);
        let p = f.draws.n_beta;
        for s in f.summary.iter().take(p).chain(f.summary.last()) {
            println!("  {:<28} mean {:>9.4} sd {:>8.4} rhat {:>6.3}", s.name, s.mean, s.sd, s.rhat);
        }
        println!("  variance of group-effect means {:.4}", fit::effect_mean_variance(f));
    }
    Ok(warnings)
}

pub fn simulate(c: &Common, replicates: Option<usize>, workers: usize) -> Result<Vec<String>> {
    let mut scenarios = config::load_scenarios(c.config.as_deref(), c.preset.as_deref())?;
    let mut warnings = Vec::new();
    for s in &mut scenarios {
        config::override_scenario(s, c.seed, replicates);
        let done = AtomicUsize::new(0);
        let total = s.replicates;
        let verbose = c.verbose;
        let report = study::run_study_with_progress(s, workers, |r| {
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if verbose > 0 {
                eprintln!("{}: replicate {} done ({k}/{total})", s.name, r.replicate);
            }
        })?;
        io::write_report(&report, &c.out)?;
        print!("{}", study::format_summary(&report));
        warnings.extend(report.warnings.iter().map(|w| format!("{}: {w}", s.name)));
    }
    Ok(warnings)
}

/// Re-emit CSVs from report JSON files found in `input`.
pub fn report(input: &Path, out: &Path) -> Result<Vec<String>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_report.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no *_report.json files in {}", input.display());
    }
    let mut warnings = Vec::new();
    for p in paths {
        let report: dwpp_core::montecarlo::McReport = io::read_json(&p)?;
        io::write_report(&report, out)?;
        print!("{}", study::format_summary(&report));
        warnings.extend(report.warnings.iter().map(|w| format!("{}: {w}", report.scenario)));
    }
    Ok(warnings)
}
