//! Production technology, marginal revenue product, the hiring rule and
//! technology shocks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Aggregates, Params};
use crate::{Error, Result};

/// Functional form of aggregate output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Technology {
    /// `A * K^a * L^(1-a)`, homogeneous of degree one in (K, L).
    #[default]
    CobbDouglas,
    /// `K^a + L^(1-a) + A`, the additive form kept for fidelity experiments.
    Additive,
}

pub fn output(capital: f64, labor: f64, knowledge: f64, alpha: f64, tech: Technology) -> Result<f64> {
    if !(capital.is_finite() && capital > 0.0) {
        return Err(Error::pre("output: capital must be > 0"));
    }
    if !(knowledge.is_finite() && knowledge > 0.0) {
        return Err(Error::pre("output: knowledge must be > 0"));
    }
    if !(labor.is_finite() && labor >= 0.0) {
        return Err(Error::pre("output: labour must be >= 0"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::pre("output: alpha must lie in (0, 1)"));
    }
    Ok(match tech {
        Technology::CobbDouglas => knowledge * capital.powf(alpha) * labor.powf(1.0 - alpha),
        Technology::Additive => capital.powf(alpha) + labor.powf(1.0 - alpha) + knowledge,
    })
}

/// One firm's labour-side state.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmState {
    pub capital: f64,
    /// Employed headcount.
    pub employed: u32,
    /// Open positions carried between periods.
    pub vacancies: u32,
    pub price: f64,
    /// Trailing window of per-period marginal revenue products.
    pub mrpl_history: VecDeque<f64>,
    pub n_window: usize,
    pub wage_offer: f64,
    /// Effective effort per head; scales labour input in production.
    pub effort: f64,
}

impl FirmState {
    pub fn new(capital: f64, employed: u32, price: f64, n_window: usize, wage_offer: f64) -> Result<Self> {
        if !(capital.is_finite() && capital > 0.0) {
            return Err(Error::invalid("firm.capital", "must be > 0"));
        }
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::invalid("firm.price", "must be > 0"));
        }
        if n_window == 0 {
            return Err(Error::invalid("firm.n_window", "must be >= 1"));
        }
        if !(wage_offer.is_finite() && wage_offer >= 0.0) {
            return Err(Error::invalid("firm.wage_offer", "must be >= 0"));
        }
        Ok(FirmState {
            capital,
            employed,
            vacancies: 0,
            price,
            mrpl_history: VecDeque::with_capacity(n_window),
            n_window,
            wage_offer,
            effort: 1.0,
        })
    }

    /// Appends an observation, dropping the oldest beyond the window.
    pub fn record_mrpl(&mut self, x: f64) {
        self.mrpl_history.push_back(x);
        while self.mrpl_history.len() > self.n_window {
            self.mrpl_history.pop_front();
        }
    }

    fn labor(&self, heads: u32) -> f64 {
        self.effort * heads as f64
    }
}

/// Revenue from the marginal worker: `p * [F(e_m) - F(e_m - 1)]` under the
/// Cobb-Douglas form.
pub fn mrpl(firm: &FirmState, knowledge: f64, alpha: f64) -> Result<f64> {
    if firm.employed == 0 {
        return Err(Error::pre("mrpl: no marginal worker when e_m = 0"));
    }
    let tech = Technology::CobbDouglas;
    let with = output(firm.capital, firm.labor(firm.employed), knowledge, alpha, tech)?;
    let without = output(firm.capital, firm.labor(firm.employed - 1), knowledge, alpha, tech)?;
    Ok(firm.price * (with - without))
}

pub fn reservation_productivity(firm: &FirmState) -> Result<f64> {
    if firm.mrpl_history.is_empty() {
        return Err(Error::pre("reservation productivity undefined for empty history"));
    }
    Ok(firm.mrpl_history.iter().sum::<f64>() / firm.mrpl_history.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiringKind {
    PostVacancies(u32),
    Hold,
    DestroyJobs(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiringAction {
    pub kind: HiringKind,
    /// Signed hiring rate in (-1, 1).
    pub rate: f64,
    /// Discounted job-creation value `h * x^a / (1 + r)`.
    pub creation_value: f64,
}

impl HiringAction {
    pub fn hold() -> Self {
        HiringAction { kind: HiringKind::Hold, rate: 0.0, creation_value: 0.0 }
    }
}

/// Compares the marginal product with the reservation level and turns the
/// relative gap into a vacancy or destruction decision.
pub fn hiring_decision(x: f64, x_bar: f64, firm: &FirmState, params: &Params) -> Result<HiringAction> {
    if !(x_bar.is_finite() && x_bar > 0.0) {
        return Err(Error::pre("hiring_decision: reservation productivity must be > 0"));
    }
    if !x.is_finite() {
        return Err(Error::pre("hiring_decision: non-finite marginal product"));
    }
    let band = params.h_hold_band;
    let gap = (x - x_bar) / x_bar;
    let heads = firm.employed as f64;
    let count = |h: f64| ((h.abs() * heads).round() as u32).max(1);

    if x > x_bar * (1.0 + band) {
        let rate = gap.min(1.0 - params.tol);
        let creation_value = rate * x.max(0.0).powf(params.alpha_exp) / (1.0 + params.r);
        if creation_value > 0.0 {
            return Ok(HiringAction { kind: HiringKind::PostVacancies(count(rate)), rate, creation_value });
        }
        Ok(HiringAction { creation_value, ..HiringAction::hold() })
    } else if x < x_bar * (1.0 - band) && firm.employed > 0 {
        let rate = gap.max(-1.0 + params.tol);
        let creation_value = rate * x.max(0.0).powf(params.alpha_exp) / (1.0 + params.r);
        let n = count(rate).min(firm.employed);
        Ok(HiringAction { kind: HiringKind::DestroyJobs(n), rate, creation_value })
    } else {
        Ok(HiringAction::hold())
    }
}

/// A temporary proportional change in the knowledge stock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechShock {
    pub magnitude: f64,
    pub duration: usize,
    pub start: usize,
}

impl TechShock {
    pub fn new(magnitude: f64, duration: usize, start: usize) -> Result<Self> {
        let s = TechShock { magnitude, duration, start };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude > -1.0 && self.magnitude < 1.0) || self.magnitude == 0.0 {
            return Err(Error::invalid("shock.magnitude", "must be non-zero and inside (-1, 1)"));
        }
        if self.duration == 0 {
            return Err(Error::invalid("shock.duration", "must be >= 1"));
        }
        Ok(())
    }

    pub fn active(&self, t: usize) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// Scales knowledge by `1 + magnitude` inside the shock window; a no-op
/// everywhere else.
pub fn apply_tech_shock(agg: &Aggregates, shock: &TechShock, t: usize) -> Result<Aggregates> {
    shock.validate()?;
    if shock.active(t) {
        agg.with_knowledge(agg.knowledge() * (1.0 + shock.magnitude))
    } else {
        Ok(agg.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn firm(employed: u32, price: f64) -> FirmState {
        FirmState::new(1.0, employed, price, 4, 0.5).unwrap()
    }

    #[test]
    fn output_examples() {
        let cd = Technology::CobbDouglas;
        assert!((output(1.0, 1.0, 1.0, 0.5, cd).unwrap() - 1.0).abs() < 1e-12);
        assert!((output(4.0, 1.0, 1.0, 0.5, cd).unwrap() - 2.0).abs() < 1e-12);
        let add = output(4.0, 1.0, 1.0, 0.5, Technology::Additive).unwrap();
        assert!((add - 4.0).abs() < 1e-12);
        assert!(output(0.0, 1.0, 1.0, 0.5, cd).is_err());
        assert!(output(1.0, 1.0, 0.0, 0.5, cd).is_err());
    }

    #[test]
    fn mrpl_examples() {
        assert!((mrpl(&firm(1, 1.0), 1.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let one = mrpl(&firm(3, 1.0), 1.0, 0.5).unwrap();
        let two = mrpl(&firm(3, 2.0), 1.0, 0.5).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert!(mrpl(&firm(2, 1.0), 1.0, 0.5).unwrap() < mrpl(&firm(1, 1.0), 1.0, 0.5).unwrap());
        assert!(mrpl(&firm(0, 1.0), 1.0, 0.5).is_err());
    }

    #[test]
    fn reservation_examples() {
        let mut f = firm(1, 1.0);
        assert!(reservation_productivity(&f).is_err());
        f.record_mrpl(2.0);
        assert_eq!(reservation_productivity(&f).unwrap(), 2.0);
        let mut f = firm(1, 1.0);
        for v in [1.0, 2.0, 3.0] {
            f.record_mrpl(v);
        }
        assert_eq!(reservation_productivity(&f).unwrap(), 2.0);
        let mut f = firm(1, 1.0);
        for _ in 0..9 {
            f.record_mrpl(0.7);
        }
        assert_eq!(f.mrpl_history.len(), 4);
        assert!((reservation_productivity(&f).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn hiring_examples() {
        let params = Params { h_hold_band: 0.005, ..Params::default() };
        let a = hiring_decision(1.0, 1.0, &firm(100, 1.0), &params).unwrap();
        assert_eq!(a.kind, HiringKind::Hold);
        assert_eq!(a.rate, 0.0);

        let a = hiring_decision(1.01, 1.0, &firm(100, 1.0), &params).unwrap();
        assert_eq!(a.kind, HiringKind::PostVacancies(1));
        assert!((a.rate - 0.01).abs() < 1e-12);
        assert!(a.creation_value > 0.0);

        let a = hiring_decision(0.5, 1.0, &firm(10, 1.0), &params).unwrap();
        assert_eq!(a.kind, HiringKind::DestroyJobs(5));
        assert!((a.rate + 0.5).abs() < 1e-12);
    }

    #[test]
    fn hiring_rate_is_clipped() {
        let params = Params::default();
        let a = hiring_decision(50.0, 1.0, &firm(10, 1.0), &params).unwrap();
        assert!(a.rate < 1.0);
        let a = hiring_decision(0.0, 1.0, &firm(10, 1.0), &params).unwrap();
        assert!(a.rate > -1.0);
        assert_eq!(a.kind, HiringKind::DestroyJobs(10));
    }

    #[test]
    fn shock_examples() {
        let agg = Aggregates::new(10, 10, 0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let shock = TechShock::new(-0.05, 3, 5).unwrap();
        let hit = apply_tech_shock(&agg, &shock, 6).unwrap();
        assert!((hit.knowledge() - 0.95).abs() < 1e-12);
        assert_eq!(apply_tech_shock(&agg, &shock, 4).unwrap(), agg);
        assert_eq!(apply_tech_shock(&agg, &shock, 8).unwrap(), agg);
        let cd = Technology::CobbDouglas;
        let y0 = output(1.0, 1.0, agg.knowledge(), 0.5, cd).unwrap();
        let y1 = output(1.0, 1.0, hit.knowledge(), 0.5, cd).unwrap();
        assert!((y1 / y0 - 0.95).abs() < 1e-12);
        assert!(TechShock::new(-1.0, 1, 0).is_err());
        assert!(TechShock::new(0.0, 1, 0).is_err());
        assert!(TechShock::new(0.1, 0, 0).is_err());
    }

    #[test]
    fn shock_accounting_over_window() {
        let shock = TechShock::new(-0.05, 10, 3).unwrap();
        let cd = Technology::CobbDouglas;
        for t in 0..20 {
            // baseline path with a drifting knowledge stock
            let base = Aggregates::new(5, 5, 0, 1.0 + 0.01 * t as f64, 2.0, 3.0, 1.0, 1.0).unwrap();
            let y_base = output(base.capital(), base.labor(), base.knowledge(), 0.4, cd).unwrap();
            let hit = apply_tech_shock(&base, &shock, t).unwrap();
            let y_hit = output(hit.capital(), hit.labor(), hit.knowledge(), 0.4, cd).unwrap();
            let expect = if shock.active(t) { 0.95 } else { 1.0 };
            assert!((y_hit / y_base - expect).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn constant_returns(k in 0.1..50.0f64, l in 0.0..50.0f64, a in 0.1..5.0f64,
                            alpha in 0.05..0.95f64, c in 0.1..10.0f64) {
            let cd = Technology::CobbDouglas;
            let y = output(k, l, a, alpha, cd).unwrap();
            let yc = output(c * k, c * l, a, alpha, cd).unwrap();
            prop_assert!((yc - c * y).abs() <= 1e-9 * (1.0 + yc.abs()));
        }

        #[test]
        fn hiring_bounds_and_monotone(x in 0.0..5.0f64, dx in 0.0..1.0f64, xb in 0.1..3.0f64,
                                      heads in 1u32..500) {
            let params = Params::default();
            let f = firm(heads, 1.0);
            let a = hiring_decision(x, xb, &f, &params).unwrap();
            let b = hiring_decision(x + dx, xb, &f, &params).unwrap();
            prop_assert!(a.rate > -1.0 && a.rate < 1.0);
            prop_assert!(b.rate >= a.rate);
            match a.kind {
                HiringKind::PostVacancies(n) => prop_assert!(a.rate > 0.0 && n >= 1),
                HiringKind::DestroyJobs(n) => prop_assert!(a.rate < 0.0 && n >= 1 && n <= heads),
                HiringKind::Hold => prop_assert_eq!(a.rate, 0.0),
            }
        }
    }
}
