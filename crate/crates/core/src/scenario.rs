//! Scenario files: a versioned TOML schema with strict keys, defaults and
//! range checks that point at the offending line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::firm::TechShock;
use crate::mobility::MobilityPolicy;
use crate::model::Params;
use crate::pricing::{StageGame, StrategyMachine};
use crate::spatial::{CircleMarket, Coalition};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub periods: usize,
    /// Seeds the monitoring noise of the pricing game.
    pub seed: u64,
    pub params: Params,
    pub economy: EconomyConfig,
    pub labor: LaborConfig,
    pub shocks: Vec<TechShock>,
    pub mobility: MobilityPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pricing: Option<PricingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialConfig>,
    pub output: OutputConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            periods: 200,
            seed: 42,
            params: Params::default(),
            economy: EconomyConfig::default(),
            labor: LaborConfig::default(),
            shocks: Vec::new(),
            mobility: MobilityPolicy::default(),
            pricing: None,
            spatial: None,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyConfig {
    pub households: usize,
    /// Households employed at t = 0, spread round-robin over firms.
    pub initial_employed: usize,
    pub knowledge: f64,
    pub price: f64,
    /// Household productivities are spread evenly over this range.
    pub productivity_min: f64,
    pub productivity_max: f64,
}

impl Default for EconomyConfig {
    fn default() -> Self {
        EconomyConfig {
            households: 1000,
            initial_employed: 880,
            knowledge: 1.0,
            price: 1.0,
            productivity_min: 0.02,
            productivity_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaborConfig {
    pub firms: usize,
    pub capital_per_firm: f64,
    /// Length of the trailing marginal-product window.
    pub n_window: usize,
    /// Flow value of unemployment.
    pub benefit: f64,
    pub matching_efficiency: f64,
    /// Weight of the unemployed pool in the matching function.
    pub matching_elasticity: f64,
    pub wage_grid_points: usize,
    /// First-period reference wage as a share of the mean marginal product.
    pub initial_wage_ratio: f64,
    pub punishment_effort: f64,
    pub punishment_periods: u32,
}

impl Default for LaborConfig {
    fn default() -> Self {
        LaborConfig {
            firms: 10,
            capital_per_firm: 324.0,
            n_window: 4,
            benefit: 0.2,
            matching_efficiency: 0.3,
            matching_elasticity: 0.5,
            wage_grid_points: 2001,
            initial_wage_ratio: 0.8,
            punishment_effort: 0.8,
            punishment_periods: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingStrategy {
    #[default]
    Grim,
    Abreu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingConfig {
    pub n_firms: usize,
    pub demand_intercept: f64,
    pub demand_slope: f64,
    pub unit_cost: f64,
    pub noise_sigma: f64,
    pub strategy: PricingStrategy,
    /// Stick price for the Abreu code; defaults to unit cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_stick: Option<f64>,
    pub k_stick: u32,
    /// Discount factor used by the pricing lab.
    pub delta: f64,
    pub lab_periods: usize,
    pub entrant_cost: f64,
    pub entry_fee: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            n_firms: 2,
            demand_intercept: 10.0,
            demand_slope: 1.0,
            unit_cost: 2.0,
            noise_sigma: 0.0,
            strategy: PricingStrategy::Grim,
            p_stick: None,
            k_stick: 3,
            delta: 0.9,
            lab_periods: 50,
            entrant_cost: 2.0,
            entry_fee: 4.0,
        }
    }
}

impl PricingConfig {
    pub fn game(&self) -> Result<StageGame> {
        StageGame::new(self.n_firms, self.demand_intercept, self.demand_slope, self.unit_cost, self.noise_sigma)
    }

    pub fn stick_price(&self) -> f64 {
        self.p_stick.unwrap_or(self.unit_cost)
    }

    pub fn machines(&self) -> Result<Vec<StrategyMachine>> {
        let game = self.game()?;
        (0..self.n_firms)
            .map(|_| match self.strategy {
                PricingStrategy::Grim => Ok(StrategyMachine::grim(&game)),
                PricingStrategy::Abreu => StrategyMachine::abreu(&game, self.stick_price(), self.k_stick),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let game = self.game().map_err(|e| rename(e, "pricing"))?;
        if self.stick_price() > game.unit_cost || self.stick_price() < 0.0 {
            return Err(Error::invalid("pricing.p_stick", "must lie in [0, unit_cost]"));
        }
        if self.k_stick == 0 {
            return Err(Error::invalid("pricing.k_stick", "must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("pricing.delta", "must lie in (0, 1)"));
        }
        if self.lab_periods == 0 {
            return Err(Error::invalid("pricing.lab_periods", "must be >= 1"));
        }
        if !(self.entrant_cost >= 0.0) {
            return Err(Error::invalid("pricing.entrant_cost", "must be >= 0"));
        }
        if !(self.entry_fee >= 0.0) {
            return Err(Error::invalid("pricing.entry_fee", "must be >= 0"));
        }
        if !(game.monopoly_price() > self.entrant_cost) {
            return Err(Error::invalid("pricing.entrant_cost", "must be below the monopoly price"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub n_firms: usize,
    /// Explicit positions; equally spaced when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    pub tau: f64,
    pub unit_cost: f64,
    pub switch_cost: f64,
    pub coalition_first: usize,
    pub coalition_size: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            n_firms: 8,
            positions: None,
            tau: 1.0,
            unit_cost: 0.0,
            switch_cost: 0.0,
            coalition_first: 0,
            coalition_size: 2,
        }
    }
}

impl SpatialConfig {
    pub fn market(&self) -> Result<CircleMarket> {
        match &self.positions {
            Some(p) => {
                if p.len() != self.n_firms {
                    return Err(Error::invalid("spatial.positions", "length must equal n_firms"));
                }
                CircleMarket::new(p.clone(), self.tau, self.unit_cost, self.switch_cost)
            }
            None => CircleMarket::equally_spaced(self.n_firms, self.tau, self.unit_cost, self.switch_cost),
        }
    }

    pub fn coalition(&self, market: &CircleMarket) -> Result<Coalition> {
        Coalition::new(market, self.coalition_first, self.coalition_size)
    }

    fn validate(&self) -> Result<()> {
        let market = self.market().map_err(|e| rename(e, "spatial"))?;
        self.coalition(&market).map_err(|e| rename(e, "spatial"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub steady_window: usize,
    /// Relative range allowed over the steady-state window.
    pub steady_tol: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { steady_window: 20, steady_tol: 0.01 }
    }
}

/// Re-roots an invalid-value name from a library type into the scenario tree.
fn rename(e: Error, section: &str) -> Error {
    match e {
        Error::Invalid { name, reason } => {
            let leaf = name.rsplit('.').next().unwrap_or(&name).to_string();
            Error::invalid(format!("{section}.{leaf}"), reason)
        }
        other => other,
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid("schema_version", format!("unsupported, expected {SCHEMA_VERSION}")));
        }
        if self.periods == 0 {
            return Err(Error::invalid("periods", "must be >= 1"));
        }
        self.params.validate()?;
        let e = &self.economy;
        if e.households == 0 {
            return Err(Error::invalid("economy.households", "must be >= 1"));
        }
        if e.initial_employed > e.households {
            return Err(Error::invalid("economy.initial_employed", "cannot exceed households"));
        }
        if !(e.knowledge > 0.0) {
            return Err(Error::invalid("economy.knowledge", "must be > 0"));
        }
        if !(e.price > 0.0) {
            return Err(Error::invalid("economy.price", "must be > 0"));
        }
        if !(e.productivity_min > 0.0 && e.productivity_min < e.productivity_max) {
            return Err(Error::invalid("economy.productivity_min", "need 0 < productivity_min < productivity_max"));
        }
        let l = &self.labor;
        if l.firms == 0 {
            return Err(Error::invalid("labor.firms", "must be >= 1"));
        }
        if !(l.capital_per_firm > 0.0) {
            return Err(Error::invalid("labor.capital_per_firm", "must be > 0"));
        }
        if l.n_window == 0 {
            return Err(Error::invalid("labor.n_window", "must be >= 1"));
        }
        if !(l.benefit >= 0.0) {
            return Err(Error::invalid("labor.benefit", "must be >= 0"));
        }
        if !(l.matching_efficiency > 0.0) {
            return Err(Error::invalid("labor.matching_efficiency", "must be > 0"));
        }
        if !(l.matching_elasticity > 0.0 && l.matching_elasticity < 1.0) {
            return Err(Error::invalid("labor.matching_elasticity", "must lie in (0, 1)"));
        }
        if l.wage_grid_points < 3 {
            return Err(Error::invalid("labor.wage_grid_points", "must be >= 3"));
        }
        if !(l.initial_wage_ratio > 0.0 && l.initial_wage_ratio <= 1.0) {
            return Err(Error::invalid("labor.initial_wage_ratio", "must lie in (0, 1]"));
        }
        if !(l.punishment_effort > 0.0 && l.punishment_effort < 1.0) {
            return Err(Error::invalid("labor.punishment_effort", "must lie in (0, 1)"));
        }
        if l.punishment_periods == 0 {
            return Err(Error::invalid("labor.punishment_periods", "must be >= 1"));
        }
        for s in &self.shocks {
            s.validate().map_err(|e| rename(e, "shocks"))?;
            if s.start + s.duration > self.periods {
                return Err(Error::invalid("shocks.start", "shock window must end within the run"));
            }
        }
        self.mobility.validate()?;
        if let Some(p) = &self.pricing {
            p.validate()?;
        }
        if let Some(s) = &self.spatial {
            s.validate()?;
        }
        if self.output.steady_window < 2 {
            return Err(Error::invalid("output.steady_window", "must be >= 2"));
        }
        if !(self.output.steady_tol > 0.0) {
            return Err(Error::invalid("output.steady_tol", "must be > 0"));
        }
        Ok(())
    }

    /// Parses and validates scenario text; `origin` names the source in errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let msg = e.message().trim().to_string();
            config_error(origin, line, msg)
        })?;
        scenario.validate().map_err(|e| locate(e, text, origin))?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config { path: origin.clone(), message: "file not found".into() },
            _ => Error::Io { path: origin.clone(), source: e },
        })?;
        Scenario::from_toml_str(&text, &origin)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { path: "<scenario>".into(), message: e.to_string() })
    }

    /// Returns a copy with the value at `path` replaced. `path` is dotted,
    /// with `[i]` indexing arrays, e.g. `shocks[0].magnitude`.
    pub fn with_override(&self, path: &str, raw: &str) -> Result<Self> {
        let cfg = |message: String| Error::Config { path: path.to_string(), message };
        let mut root = toml::Value::try_from(self).map_err(|e| cfg(e.to_string()))?;
        let slot = resolve(&mut root, path).ok_or_else(|| cfg("parameter path does not resolve".into()))?;
        *slot = parse_like(slot, raw).ok_or_else(|| cfg(format!("cannot use `{raw}` here")))?;
        let text = toml::to_string(&root).map_err(|e| cfg(e.to_string()))?;
        Scenario::from_toml_str(&text, path)
    }
}

fn resolve<'a>(root: &'a mut toml::Value, path: &str) -> Option<&'a mut toml::Value> {
    let mut cur = root;
    for part in path.split('.') {
        let (key, index) = match part.split_once('[') {
            Some((k, rest)) => (k, Some(rest.strip_suffix(']')?.parse::<usize>().ok()?)),
            None => (part, None),
        };
        cur = cur.as_table_mut()?.get_mut(key)?;
        if let Some(i) = index {
            cur = cur.as_array_mut()?.get_mut(i)?;
        }
    }
    Some(cur)
}

fn parse_like(existing: &toml::Value, raw: &str) -> Option<toml::Value> {
    let raw = raw.trim();
    match existing {
        toml::Value::Integer(_) => raw.parse::<i64>().ok().map(toml::Value::Integer),
        toml::Value::Float(_) => raw.parse::<f64>().ok().map(toml::Value::Float),
        toml::Value::Boolean(_) => raw.parse::<bool>().ok().map(toml::Value::Boolean),
        toml::Value::String(_) => Some(toml::Value::String(raw.to_string())),
        _ => None,
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn config_error(origin: &str, line: Option<usize>, message: String) -> Error {
    let message = match line {
        Some(l) => format!("line {l}: {message}"),
        None => message,
    };
    Error::Config { path: origin.to_string(), message }
}

/// Turns a validation error into a config error, adding the line of the
/// offending key when it appears in the text.
fn locate(e: Error, text: &str, origin: &str) -> Error {
    match e {
        Error::Invalid { name, reason } => {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            let line = text.lines().position(|l| {
                let l = l.trim_start();
                l.strip_prefix(leaf).is_some_and(|rest| rest.trim_start().starts_with('='))
            });
            config_error(origin, line.map(|i| i + 1), format!("key `{name}`: {reason}"))
        }
        other => Error::Config { path: origin.to_string(), message: other.to_string() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml_str("schema_version = 1\n", "mem").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.params.lambda_reneg, 0.25);
    }

    #[test]
    fn out_of_range_names_key_and_line() {
        let err = Scenario::from_toml_str("schema_version = 1\n[params]\nlambda_reneg = 1.5\n", "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lambda_reneg") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = Scenario::from_toml_str("[params]\nlamda_reneg = 0.5\n", "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda_reneg") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn zero_periods_rejected() {
        assert!(Scenario::from_toml_str("periods = 0\n", "mem").is_err());
    }

    #[test]
    fn shock_must_fit() {
        let text = "periods = 50\n[[shocks]]\nmagnitude = -0.05\nduration = 10\nstart = 45\n";
        assert!(Scenario::from_toml_str(text, "mem").is_err());
    }

    #[test]
    fn round_trip_with_optional_sections() {
        let s = Scenario {
            shocks: vec![TechShock::new(-0.05, 10, 100).unwrap()],
            pricing: Some(PricingConfig { p_stick: Some(1.5), ..PricingConfig::default() }),
            spatial: Some(SpatialConfig { positions: Some(vec![0.0, 0.3, 0.5]), n_firms: 3, ..SpatialConfig::default() }),
            ..Scenario::default()
        };
        let text = s.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text, "mem").unwrap(), s);
    }

    #[test]
    fn overrides() {
        let s = Scenario { shocks: vec![TechShock::new(-0.05, 10, 100).unwrap()], ..Scenario::default() };
        let o = s.with_override("mobility.band_floor", "0.4").unwrap();
        assert_eq!(o.mobility.band_floor, 0.4);
        let o = s.with_override("shocks[0].magnitude", "-0.08").unwrap();
        assert_eq!(o.shocks[0].magnitude, -0.08);
        let o = s.with_override("labor.firms", "4").unwrap();
        assert_eq!(o.labor.firms, 4);
        assert!(s.with_override("labor.frims", "4").is_err());
        assert!(s.with_override("pricing.n_firms", "3").is_err());
        assert!(s.with_override("params.lambda_reneg", "2.0").is_err());
    }
}
