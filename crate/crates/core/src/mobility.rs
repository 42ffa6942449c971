//! Point-based entry screening, vacancy bands, knowledge growth and job
//! protection.

use serde::{Deserialize, Serialize};

use crate::firm::{HiringAction, HiringKind};
use crate::sim::TimeSeries;
use crate::{Error, Result};

/// Distance kept from the ends of the unit interval.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PointScore(f64);

impl PointScore {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid("score", "must lie strictly inside (0, 1)"));
        }
        Ok(PointScore(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacancyBand {
    pub id: u64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub wage: f64,
}

impl VacancyBand {
    pub fn new(id: u64, s_lo: f64, s_hi: f64, wage: f64) -> Result<Self> {
        if !(s_lo > 0.0 && s_lo <= s_hi && s_hi < 1.0) {
            return Err(Error::invalid("band", "need 0 < s_lo <= s_hi < 1"));
        }
        if !(wage >= 0.0) {
            return Err(Error::invalid("band.wage", "must be >= 0"));
        }
        Ok(VacancyBand { id, s_lo, s_hi, wage })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityPolicy {
    pub theta_productivity: f64,
    pub theta_wage: f64,
    /// Workers with at least this tenure cannot be fired. `None` disables
    /// protection.
    pub protection_tenure: Option<u32>,
    pub knowledge_gain: f64,
    /// Lower score bound every firm sets on its openings for entrants.
    pub band_floor: f64,
}

impl Default for MobilityPolicy {
    fn default() -> Self {
        MobilityPolicy {
            theta_productivity: 0.9,
            theta_wage: 0.1,
            protection_tenure: None,
            knowledge_gain: 0.0,
            band_floor: 0.2,
        }
    }
}

impl MobilityPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_productivity >= 0.0 && self.theta_wage >= 0.0) {
            return Err(Error::invalid("mobility.theta_productivity", "weights must be >= 0"));
        }
        if !(self.theta_productivity + self.theta_wage > 0.0) {
            return Err(Error::invalid("mobility.theta_wage", "weights must not both be zero"));
        }
        if !(self.knowledge_gain >= 0.0) {
            return Err(Error::invalid("mobility.knowledge_gain", "must be >= 0"));
        }
        if !(self.band_floor > 0.0 && self.band_floor < 1.0) {
            return Err(Error::invalid("mobility.band_floor", "must lie strictly inside (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationStats {
    pub max_productivity: f64,
    pub max_wage: f64,
}

pub fn score_worker(productivity: f64, offered_wage: f64, policy: &MobilityPolicy, stats: PopulationStats) -> Result<PointScore> {
    if !(stats.max_productivity > 0.0 && stats.max_wage > 0.0) {
        return Err(Error::pre("score_worker: population maxima must be > 0"));
    }
    if !(productivity > 0.0) || !(offered_wage >= 0.0) {
        return Err(Error::pre("score_worker: need productivity > 0 and wage >= 0"));
    }
    let (ta, tw) = (policy.theta_productivity, policy.theta_wage);
    let raw = (ta * productivity / stats.max_productivity + tw * offered_wage / stats.max_wage) / (ta + tw);
    PointScore::new(raw.clamp(SCORE_EPS, 1.0 - SCORE_EPS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Matched(u64),
    StructurallyUnemployed,
}

/// Picks the reachable band with the highest floor, lowest id on ties.
pub fn admit(score: PointScore, vacancies: &[VacancyBand]) -> Admission {
    let s = score.value();
    vacancies
        .iter()
        .filter(|v| v.s_lo <= s)
        .min_by(|a, b| b.s_lo.total_cmp(&a.s_lo).then(a.id.cmp(&b.id)))
        .map_or(Admission::StructurallyUnemployed, |v| Admission::Matched(v.id))
}

/// Admits workers in ascending id; each vacancy takes at most one worker.
pub fn admit_batch(workers: &[(u64, PointScore)], vacancies: &[VacancyBand]) -> Vec<(u64, Admission)> {
    let mut order: Vec<_> = workers.to_vec();
    order.sort_by_key(|w| w.0);
    let mut open: Vec<VacancyBand> = vacancies.to_vec();
    order
        .into_iter()
        .map(|(id, s)| {
            let outcome = admit(s, &open);
            if let Admission::Matched(v) = outcome {
                open.retain(|b| b.id != v);
            }
            (id, outcome)
        })
        .collect()
}

pub fn knowledge_update(knowledge: f64, skilled_inflow_share: f64, policy: &MobilityPolicy) -> Result<f64> {
    if !(knowledge > 0.0) {
        return Err(Error::pre("knowledge_update: knowledge must be > 0"));
    }
    if !(0.0..=1.0).contains(&skilled_inflow_share) {
        return Err(Error::pre("knowledge_update: inflow share must lie in [0, 1]"));
    }
    Ok(knowledge * (1.0 + policy.knowledge_gain * skilled_inflow_share))
}

/// Limits job destruction to workers below the protection tenure.
pub fn job_protection_filter(action: HiringAction, tenures: &[u32], policy: &MobilityPolicy) -> HiringAction {
    let HiringKind::DestroyJobs(d) = action.kind else {
        return action;
    };
    let Some(limit) = policy.protection_tenure else {
        return action;
    };
    let unprotected = tenures.iter().filter(|&&t| t < limit).count() as u32;
    match d.min(unprotected) {
        0 => HiringAction::hold(),
        n => HiringAction { kind: HiringKind::DestroyJobs(n), ..action },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WagePressure {
    /// `(band_floor, steady nominal wage)` per run, in input order.
    pub steady_wages: Vec<(f64, f64)>,
    /// Wage at the highest floor minus wage at the lowest.
    pub wage_difference: f64,
    /// `wage_difference` per unit of floor; zero when floors coincide.
    pub per_unit_floor: f64,
}

pub fn wage_pressure_diagnostic(runs: &[(f64, &TimeSeries)]) -> Result<WagePressure> {
    if runs.len() < 2 {
        return Err(Error::pre("wage_pressure_diagnostic: need at least two runs"));
    }
    let steady_wages: Vec<(f64, f64)> = runs
        .iter()
        .map(|(floor, s)| s.steady_wage().map(|w| (*floor, w)))
        .collect::<Result<_>>()?;
    let lo = steady_wages.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let hi = steady_wages.iter().copied().max_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let wage_difference = hi.1 - lo.1;
    let span = hi.0 - lo.0;
    let per_unit_floor = if span > 0.0 { wage_difference / span } else { 0.0 };
    Ok(WagePressure { steady_wages, wage_difference, per_unit_floor })
}
