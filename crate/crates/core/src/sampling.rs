//! Survey designs: probability-proportional-to-size and simple random
//! sampling, single-stage (units) and two-stage (groups, then units).
//!
//! All PPS selection uses randomized systematic sampling: the candidate list
//! is shuffled, cumulative inclusion probabilities are laid on a line, and a
//! single uniform start picks points one unit apart. This gives a fixed sample
//! size and exact first-order inclusion probabilities. Certainty units
//! (`pi = 1`) are taken before the systematic pass.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;
use crate::rng::{self, Purpose};

const CERTAINTY: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    SingleStagePps { n: usize },
    /// PPS of groups on mean `x2`, then PPS of a fraction `f` of units within
    /// each sampled group.
    TwoStageClusterPps { n: usize, f: f64 },
    SrsSingleStage { n: usize },
    SrsTwoStage { n: usize, f: f64 },
}

impl DesignKind {
    pub fn sample_size(&self) -> usize {
        match *self {
            DesignKind::SingleStagePps { n }
            | DesignKind::TwoStageClusterPps { n, .. }
            | DesignKind::SrsSingleStage { n }
            | DesignKind::SrsTwoStage { n, .. } => n,
        }
    }

    pub fn is_two_stage(&self) -> bool {
        matches!(self, DesignKind::TwoStageClusterPps { .. } | DesignKind::SrsTwoStage { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleUnit {
    pub unit_id: usize,
    pub y: f64,
    pub x1: f64,
    /// Conditional inclusion probability given the group (two-stage designs).
    pub pi_cond: Option<f64>,
    pub pi_marg: f64,
    pub w_marg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    /// Source population group.
    pub h: usize,
    /// Population size of the group, when known.
    pub pop_size: Option<usize>,
    /// Group inclusion probability (two-stage designs only).
    pub pi_g: Option<f64>,
    pub units: Vec<SampleUnit>,
}

/// An observed sample; the observed-group index `g` is the position in
/// `groups`, which are ordered by source group `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySample {
    pub groups: Vec<SampleGroup>,
    pub design: Option<DesignKind>,
}

impl SurveySample {
    pub fn n_total(&self) -> usize {
        self.groups.iter().map(|g| g.units.len()).sum()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Groups were sampled in a design stage (every group carries `pi_g`).
    pub fn is_direct(&self) -> bool {
        !self.groups.is_empty() && self.groups.iter().all(|g| g.pi_g.is_some())
    }

    pub fn units(&self) -> impl Iterator<Item = &SampleUnit> {
        self.groups.iter().flat_map(|g| g.units.iter())
    }

    /// Check the structural invariants: non-empty groups, probabilities in
    /// (0, 1], positive weights, and `pi_marg = pi_g * pi_cond` where both
    /// stages are present.
    pub fn validate(&self) -> Result<()> {
        for (g, group) in self.groups.iter().enumerate() {
            if group.units.is_empty() {
                return Err(Error::config(format!("observed group {g} has no units")));
            }
            if let Some(p) = group.pi_g {
                check_prob(p, "pi_g")?;
            }
            for u in &group.units {
                check_prob(u.pi_marg, "pi_marg")?;
                if !(u.w_marg > 0.0) || !u.w_marg.is_finite() {
                    return Err(Error::config(format!("unit {} has a non-positive weight", u.unit_id)));
                }
                if let Some(c) = u.pi_cond {
                    check_prob(c, "pi_cond")?;
                    if let Some(p) = group.pi_g {
                        if (p * c - u.pi_marg).abs() > 1e-12 * u.pi_marg.max(1e-300) {
                            return Err(Error::config(format!(
                                "unit {}: pi_marg != pi_g * pi_cond",
                                u.unit_id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{what} = {p} is outside (0, 1]")))
    }
}

/// Round half up; used for the number of sampled groups and per-group takes.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Inclusion probabilities proportional to `sizes` for a sample of `n`.
///
/// Units whose share would exceed one are fixed at one and the remaining
/// sample size is redistributed over the rest until no probability exceeds
/// one, so the result sums to `n`.
pub fn inclusion_probabilities(sizes: &[f64], n: usize) -> Result<Vec<f64>> {
    let big_n = sizes.len();
    if n == 0 {
        return Err(Error::config("sample size must be positive"));
    }
    if n > big_n {
        return Err(Error::config(format!("sample size {n} exceeds population size {big_n}")));
    }
    if sizes.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::config("size measures must be finite and positive"));
    }
    let mut capped = alloc::vec![false; big_n];
    let mut pi = alloc::vec![0.0; big_n];
    loop {
        let n_capped = capped.iter().filter(|c| **c).count();
        let remaining = (n - n_capped) as f64;
        let total: f64 = sizes.iter().zip(&capped).filter(|(_, c)| !**c).map(|(s, _)| s).sum();
        let mut newly = false;
        for i in 0..big_n {
            if capped[i] {
                pi[i] = 1.0;
            } else {
                pi[i] = if total > 0.0 { remaining * sizes[i] / total } else { 0.0 };
                if pi[i] >= 1.0 {
                    capped[i] = true;
                    pi[i] = 1.0;
                    newly = true;
                }
            }
        }
        if !newly {
            break;
        }
    }
    Ok(pi)
}

/// Per-unit inclusion probabilities proportional to `x2` for the whole
/// population.
pub fn unit_inclusion_probs(pop: &Population, n: usize) -> Result<Vec<f64>> {
    let sizes: Vec<f64> = pop.units.iter().map(|u| u.x2).collect();
    inclusion_probabilities(&sizes, n)
}

/// Randomized systematic selection. Returns selected indices in ascending
/// order; the count equals `round(sum(pi))`.
pub fn systematic_select<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> Vec<usize> {
    let mut selected: Vec<usize> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (i, &p) in pi.iter().enumerate() {
        if p >= CERTAINTY {
            selected.push(i);
        } else if p > 0.0 {
            rest.push(i);
        }
    }
    rest.shuffle(rng);
    let total: f64 = rest.iter().map(|&i| pi[i]).sum();
    let m = round_half_up(total);
    if m > 0 {
        let spacing = total / m as f64;
        let start: f64 = rng.random::<f64>();
        let mut k = 0usize;
        let mut target = start * spacing;
        let mut cum = 0.0;
        for &i in &rest {
            let next = cum + pi[i];
            if k < m && target < next {
                selected.push(i);
                k += 1;
                target = (start + k as f64) * spacing;
            }
            cum = next;
            if k == m {
                break;
            }
        }
        // Accumulated rounding can leave the final point just past the end.
        if k < m {
            if let Some(&last) = rest.iter().rev().find(|i| !selected.contains(i)) {
                selected.push(last);
            }
        }
    }
    selected.sort_unstable();
    selected
}

/// Draw a sample using the stream derived from `spec.seed`.
pub fn draw_sample(pop: &Population, spec: &DesignSpec) -> Result<SurveySample> {
    let mut rng = rng::stream(spec.seed, Purpose::Design, 0, 0);
    draw_sample_with(pop, &spec.kind, &mut rng)
}

pub fn draw_sample_with<R: Rng + ?Sized>(
    pop: &Population,
    kind: &DesignKind,
    rng: &mut R,
) -> Result<SurveySample> {
    match *kind {
        DesignKind::SingleStagePps { n } => draw_single_stage_pps(pop, n, rng),
        DesignKind::TwoStageClusterPps { n, f } => draw_two_stage(pop, n, f, true, rng),
        DesignKind::SrsSingleStage { n } => draw_srs_single_stage(pop, n, rng),
        DesignKind::SrsTwoStage { n, f } => draw_two_stage(pop, n, f, false, rng),
    }
}

fn single_stage_from(pop: &Population, pi: &[f64], chosen: &[usize], kind: DesignKind) -> SurveySample {
    let mut by_group: BTreeMap<usize, Vec<SampleUnit>> = BTreeMap::new();
    for &i in chosen {
        let unit = &pop.units[i];
        by_group.entry(unit.h).or_default().push(SampleUnit {
            unit_id: unit.unit_id,
            y: unit.y,
            x1: unit.x1,
            pi_cond: None,
            pi_marg: pi[i],
            w_marg: 1.0 / pi[i],
        });
    }
    let groups = by_group
        .into_iter()
        .map(|(h, units)| SampleGroup { h, pop_size: Some(pop.group_sizes[h]), pi_g: None, units })
        .collect();
    SurveySample { groups, design: Some(kind) }
}

/// Single-stage PPS of units with `pi_i` proportional to `x2`; groups are
/// observed only through their sampled members.
pub fn draw_single_stage_pps<R: Rng + ?Sized>(
    pop: &Population,
    n: usize,
    rng: &mut R,
) -> Result<SurveySample> {
    let pi = unit_inclusion_probs(pop, n)?;
    let chosen = systematic_select(&pi, rng);
    Ok(single_stage_from(pop, &pi, &chosen, DesignKind::SingleStagePps { n }))
}

pub fn draw_srs_single_stage<R: Rng + ?Sized>(
    pop: &Population,
    n: usize,
    rng: &mut R,
) -> Result<SurveySample> {
    let big_n = pop.n_units();
    if n == 0 || n > big_n {
        return Err(Error::config(format!("sample size {n} must be in 1..={big_n}")));
    }
    let pi = alloc::vec![n as f64 / big_n as f64; big_n];
    let chosen = systematic_select(&pi, rng);
    Ok(single_stage_from(pop, &pi, &chosen, DesignKind::SrsSingleStage { n }))
}

/// Number of groups taken in the first stage: `round(n / (N f) * G_U)`,
/// clamped to `1..=G_U`.
pub fn groups_to_sample(n: usize, n_units: usize, n_groups: usize, f: f64) -> usize {
    let gs = round_half_up(n as f64 / (n_units as f64 * f) * n_groups as f64);
    gs.clamp(1, n_groups)
}

fn draw_two_stage<R: Rng + ?Sized>(
    pop: &Population,
    n: usize,
    f: f64,
    pps: bool,
    rng: &mut R,
) -> Result<SurveySample> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::config(format!("within-group fraction f = {f} must be in (0, 1]")));
    }
    let big_n = pop.n_units();
    if n == 0 || n > big_n {
        return Err(Error::config(format!("sample size {n} must be in 1..={big_n}")));
    }
    if let Some(s) = pop.group_sizes.iter().find(|&&s| f * (s as f64) < 1.0) {
        return Err(Error::config(format!(
            "f = {f} takes less than one unit from a group of {s}; use a larger f"
        )));
    }
    let g_u = pop.n_groups();
    let g_s = groups_to_sample(n, big_n, g_u, f);
    let ranges = pop.group_ranges();

    let pi_h = if pps {
        let means: Vec<f64> = ranges
            .iter()
            .map(|r| pop.units[r.clone()].iter().map(|u| u.x2).sum::<f64>() / r.len() as f64)
            .collect();
        inclusion_probabilities(&means, g_s)?
    } else {
        alloc::vec![g_s as f64 / g_u as f64; g_u]
    };
    let chosen_groups = systematic_select(&pi_h, rng);

    let mut groups = Vec::with_capacity(chosen_groups.len());
    for h in chosen_groups {
        let range = ranges[h].clone();
        let size = range.len();
        let take = round_half_up(f * size as f64).clamp(1, size);
        let members = &pop.units[range];
        let pi_cond = if pps {
            let sizes: Vec<f64> = members.iter().map(|u| u.x2).collect();
            inclusion_probabilities(&sizes, take)?
        } else {
            alloc::vec![take as f64 / size as f64; size]
        };
        let chosen = systematic_select(&pi_cond, rng);
        let units = chosen
            .into_iter()
            .map(|j| {
                let u = &members[j];
                let marg = pi_h[h] * pi_cond[j];
                SampleUnit {
                    unit_id: u.unit_id,
                    y: u.y,
                    x1: u.x1,
                    pi_cond: Some(pi_cond[j]),
                    pi_marg: marg,
                    w_marg: 1.0 / marg,
                }
            })
            .collect();
        groups.push(SampleGroup { h, pop_size: Some(size), pi_g: Some(pi_h[h]), units });
    }
    let kind = if pps {
        DesignKind::TwoStageClusterPps { n, f }
    } else {
        DesignKind::SrsTwoStage { n, f }
    };
    Ok(SurveySample { groups, design: Some(kind) })
}
