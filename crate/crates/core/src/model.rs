//! Shared domain records and household primitives.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Structural parameters shared by every mechanism.
///
/// Fields are public so scenarios can be assembled field by field, but every
/// consumer goes through [`Params::checked`] (scenario loading does this) so
/// an out-of-range value never reaches the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Capital share, strictly inside (0, 1).
    pub alpha_exp: f64,
    /// Interest / discount rate per period.
    pub r: f64,
    /// Exogenous separation rate per period.
    pub b: f64,
    /// Population growth rate per period.
    pub g: f64,
    /// Fraction of wage contracts renegotiated each period.
    pub lambda_reneg: f64,
    /// Worker bargaining power.
    pub beta_power: f64,
    pub kappa: f64,
    pub phi: f64,
    /// Taste weight on the log knowledge stock.
    pub psi: f64,
    /// Relative dead band around the reservation productivity.
    pub h_hold_band: f64,
    pub tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha_exp: 0.4,
            r: 0.05,
            b: 0.02,
            g: 0.0,
            lambda_reneg: 0.25,
            beta_power: 0.3,
            kappa: 1.0,
            phi: 1.0,
            psi: 0.0,
            h_hold_band: 0.005,
            tol: 1e-9,
        }
    }
}

impl Params {
    /// Checks every range constraint, returning the parameters unchanged on
    /// success.
    pub fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        let check = |ok: bool, name: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("params.{name}"), reason))
            }
        };
        check(open01(self.alpha_exp), "alpha_exp", "must lie in (0, 1)")?;
        check(self.r.is_finite() && self.r >= 0.0, "r", "must be >= 0")?;
        check((0.0..1.0).contains(&self.b), "b", "must lie in [0, 1)")?;
        check(self.g.is_finite() && self.g >= 0.0, "g", "must be >= 0")?;
        check((0.0..=1.0).contains(&self.lambda_reneg), "lambda_reneg", "must lie in [0, 1]")?;
        check(open01(self.beta_power), "beta_power", "must lie in (0, 1)")?;
        check(self.kappa.is_finite() && self.kappa > 0.0, "kappa", "must be > 0")?;
        check(self.phi.is_finite() && self.phi > 0.0, "phi", "must be > 0")?;
        check(self.psi.is_finite() && self.psi >= 0.0, "psi", "must be >= 0")?;
        check(
            self.h_hold_band.is_finite() && self.h_hold_band >= 0.0,
            "h_hold_band",
            "must be >= 0",
        )?;
        check(self.tol.is_finite() && self.tol > 0.0, "tol", "must be > 0")?;
        Ok(())
    }
}

/// One household.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdState {
    /// Initial endowment of wealth.
    pub wealth: f64,
    pub employed: bool,
    pub wage: f64,
    /// Effort, in [0, 1].
    pub effort: f64,
    /// Mobility points, strictly inside (0, 1).
    pub score: f64,
    /// Periods in the current job; zero when not employed.
    pub tenure: u32,
}

impl HouseholdState {
    pub fn validate(&self) -> Result<()> {
        if !self.wealth.is_finite() || self.wealth < 0.0 {
            return Err(Error::invalid("household.wealth", "must be finite and >= 0"));
        }
        if !self.wage.is_finite() || self.wage < 0.0 {
            return Err(Error::invalid("household.wage", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.effort) {
            return Err(Error::invalid("household.effort", "must lie in [0, 1]"));
        }
        if !(self.score > 0.0 && self.score < 1.0) {
            return Err(Error::invalid("household.score", "must lie in (0, 1)"));
        }
        if !self.employed && self.tenure != 0 {
            return Err(Error::invalid("household.tenure", "must be 0 when not employed"));
        }
        Ok(())
    }
}

/// Economy-wide aggregates. The employment split always covers the whole
/// population; the constructor is the only way in.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    households: u64,
    employed: u64,
    unemployed: u64,
    knowledge: f64,
    capital: f64,
    labor: f64,
    wage: f64,
    price: f64,
}

impl Aggregates {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        households: u64,
        employed: u64,
        unemployed: u64,
        knowledge: f64,
        capital: f64,
        labor: f64,
        wage: f64,
        price: f64,
    ) -> Result<Self> {
        if employed + unemployed != households {
            return Err(Error::invalid(
                "aggregates.e_m",
                format!("e_m + e_u = {} but H = {households}", employed + unemployed),
            ));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(knowledge) {
            return Err(Error::invalid("aggregates.A", "knowledge must be > 0"));
        }
        if !positive(capital) {
            return Err(Error::invalid("aggregates.K", "capital must be > 0"));
        }
        if !positive(price) {
            return Err(Error::invalid("aggregates.p", "price level must be > 0"));
        }
        if !labor.is_finite() || labor < 0.0 {
            return Err(Error::invalid("aggregates.L", "labour input must be >= 0"));
        }
        if !wage.is_finite() || wage < 0.0 {
            return Err(Error::invalid("aggregates.w_bar", "wage must be >= 0"));
        }
        Ok(Aggregates { households, employed, unemployed, knowledge, capital, labor, wage, price })
    }

    pub fn households(&self) -> u64 {
        self.households
    }
    pub fn employed(&self) -> u64 {
        self.employed
    }
    pub fn unemployed(&self) -> u64 {
        self.unemployed
    }
    pub fn knowledge(&self) -> f64 {
        self.knowledge
    }
    pub fn capital(&self) -> f64 {
        self.capital
    }
    pub fn labor(&self) -> f64 {
        self.labor
    }
    pub fn wage(&self) -> f64 {
        self.wage
    }
    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn with_knowledge(&self, knowledge: f64) -> Result<Self> {
        Aggregates::new(
            self.households,
            self.employed,
            self.unemployed,
            knowledge,
            self.capital,
            self.labor,
            self.wage,
            self.price,
        )
    }
}

/// Quasi-linear household utility: endowment plus labour income, less a
/// convex effort cost, plus a log taste for knowledge.
pub fn household_utility(
    hh: &HouseholdState,
    leisure: f64,
    knowledge: f64,
    params: &Params,
) -> Result<f64> {
    hh.validate()?;
    if !(0.0..=1.0).contains(&leisure) {
        return Err(Error::pre("leisure must lie in [0, 1]"));
    }
    if !(knowledge.is_finite() && knowledge > 0.0) {
        return Err(Error::pre("knowledge must be > 0"));
    }
    let income = hh.wage * (1.0 - leisure);
    let disutility = params.kappa * hh.effort.powf(1.0 + params.phi) / (1.0 + params.phi);
    Ok(hh.wealth + income - disutility + params.psi * knowledge.ln())
}

/// Lifetime feasibility: the household dissaves its whole endowment and
/// carries `fiscal_carryover` forward; both claims must be covered by the
/// endowment plus discounted earnings.
pub fn budget_satisfied(
    hh: &HouseholdState,
    lifetime_earnings_npv: f64,
    fiscal_carryover: f64,
) -> Result<bool> {
    if !(lifetime_earnings_npv.is_finite() && lifetime_earnings_npv >= 0.0) {
        return Err(Error::pre("lifetime earnings NPV must be >= 0"));
    }
    let claims = hh.wealth + fiscal_carryover;
    Ok(claims <= hh.wealth + lifetime_earnings_npv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hh(wealth: f64, wage: f64, effort: f64) -> HouseholdState {
        HouseholdState { wealth, employed: wage > 0.0, wage, effort, score: 0.5, tenure: 0 }
    }

    #[test]
    fn endowment_only_utility() {
        let p = Params { psi: 0.0, ..Params::default() };
        assert_eq!(household_utility(&hh(1.0, 0.0, 0.0), 1.0, 1.0, &p).unwrap(), 1.0);
    }

    #[test]
    fn closed_form_utility() {
        let p = Params { kappa: 1.0, phi: 1.0, psi: 0.0, ..Params::default() };
        let u = household_utility(&hh(1.0, 2.0, 0.5), 0.0, 1.0, &p).unwrap();
        assert!((u - 2.875).abs() < 1e-12);
    }

    #[test]
    fn higher_wage_raises_utility() {
        let p = Params::default();
        let lo = household_utility(&hh(1.0, 1.0, 0.3), 0.2, 2.0, &p).unwrap();
        let hi = household_utility(&hh(1.0, 2.0, 0.3), 0.2, 2.0, &p).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Params::default();
        assert!(household_utility(&hh(1.0, 1.0, 0.3), 1.5, 1.0, &p).is_err());
        assert!(household_utility(&hh(1.0, 1.0, 0.3), 0.5, 0.0, &p).is_err());
        assert!(household_utility(&hh(1.0, 1.0, 1.3), 0.5, 1.0, &p).is_err());
    }

    #[test]
    fn budget_examples() {
        assert!(budget_satisfied(&hh(10.0, 0.0, 0.0), 0.0, 0.0).unwrap());
        assert!(!budget_satisfied(&hh(0.0, 0.0, 0.0), 5.0, 6.0).unwrap());
        assert!(budget_satisfied(&hh(0.0, 0.0, 0.0), 5.0, 5.0).unwrap());
        assert!(budget_satisfied(&hh(0.0, 0.0, 0.0), -1.0, 0.0).is_err());
    }

    #[test]
    fn params_ranges() {
        assert!(Params::default().checked().is_ok());
        for bad in [
            Params { alpha_exp: 1.0, ..Params::default() },
            Params { b: 1.0, ..Params::default() },
            Params { lambda_reneg: 1.5, ..Params::default() },
            Params { beta_power: 0.0, ..Params::default() },
            Params { kappa: 0.0, ..Params::default() },
            Params { tol: 0.0, ..Params::default() },
            Params { r: -0.1, ..Params::default() },
        ] {
            assert!(bad.checked().is_err());
        }
    }

    #[test]
    fn aggregates_accounting() {
        assert!(Aggregates::new(10, 6, 4, 1.0, 1.0, 6.0, 1.0, 1.0).is_ok());
        assert!(Aggregates::new(10, 6, 3, 1.0, 1.0, 6.0, 1.0, 1.0).is_err());
        assert!(Aggregates::new(10, 6, 4, 0.0, 1.0, 6.0, 1.0, 1.0).is_err());
        assert!(Aggregates::new(10, 6, 4, 1.0, 1.0, 6.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn utility_monotone(wealth in 0.0..10.0f64, wage in 0.0..5.0f64, dw in 0.01..2.0f64,
                            effort in 0.0..0.9f64, de in 0.01..0.1f64, leisure in 0.0..0.99f64,
                            a in 0.1..10.0f64) {
            let p = Params { psi: 0.3, ..Params::default() };
            let base = household_utility(&hh(wealth, wage, effort), leisure, a, &p).unwrap();
            let richer = household_utility(&hh(wealth, wage + dw, effort), leisure, a, &p).unwrap();
            let tired = household_utility(&hh(wealth, wage, effort + de), leisure, a, &p).unwrap();
            let endowed = household_utility(&hh(wealth + dw, wage, effort), leisure, a, &p).unwrap();
            prop_assert!(richer > base);
            prop_assert!(tired < base);
            prop_assert!(endowed > base);
        }

        #[test]
        fn endowment_identity(wealth in 0.0..100.0f64) {
            let p = Params { psi: 0.0, ..Params::default() };
            let u = household_utility(&hh(wealth, 0.0, 0.0), 0.4, 3.0, &p).unwrap();
            prop_assert_eq!(u, wealth);
        }
    }
}
