//! Repeated Bertrand pricing: stage game, strategy machines, critical
//! discount factors, limit pricing against an entrant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Default number of points on `[c, monopoly price]` price grids.
pub const PRICE_GRID_POINTS: usize = 400;

/// Price cut used when a firm deviates from a collusive price.
const DEVIATION_EPS: f64 = 1e-6;

/// Agreement required between the analytic and simulated grim thresholds.
const GRIM_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageGame {
    pub n_firms: usize,
    pub demand_intercept: f64,
    pub demand_slope: f64,
    pub unit_cost: f64,
    /// Std. dev. of the public price signal.
    pub noise_sigma: f64,
}

impl StageGame {
    pub fn new(n_firms: usize, demand_intercept: f64, demand_slope: f64, unit_cost: f64, noise_sigma: f64) -> Result<Self> {
        let g = StageGame { n_firms, demand_intercept, demand_slope, unit_cost, noise_sigma };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_firms < 1 {
            return Err(Error::invalid("game.n_firms", "must be >= 1"));
        }
        if !(self.demand_intercept > 0.0) {
            return Err(Error::invalid("game.demand_intercept", "must be > 0"));
        }
        if !(self.demand_slope > 0.0) {
            return Err(Error::invalid("game.demand_slope", "must be > 0"));
        }
        if !(self.unit_cost >= 0.0) {
            return Err(Error::invalid("game.unit_cost", "must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("game.noise_sigma", "must be >= 0"));
        }
        if !(self.demand_intercept > self.demand_slope * self.unit_cost) {
            return Err(Error::invalid("game.demand_intercept", "demand at cost must be positive"));
        }
        Ok(())
    }

    pub fn demand(&self, p: f64) -> f64 {
        (self.demand_intercept - self.demand_slope * p).max(0.0)
    }

    pub fn monopoly_price(&self) -> f64 {
        0.5 * (self.demand_intercept / self.demand_slope + self.unit_cost)
    }

    /// Whole-market profit at a common price.
    pub fn market_profit(&self, p: f64) -> f64 {
        (p - self.unit_cost) * self.demand(p)
    }

    pub fn monopoly_profit(&self) -> f64 {
        self.market_profit(self.monopoly_price())
    }

    /// Default trigger: three signal std. devs below the collusive price.
    pub fn default_threshold(&self, p_collude: f64) -> f64 {
        p_collude - 3.0 * self.noise_sigma
    }

    fn price_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = (self.unit_cost, self.monopoly_price());
        let step = (hi - lo) / (n - 1) as f64;
        let mut grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        grid[n - 1] = hi;
        grid
    }
}

/// Bertrand allocation: the lowest price takes the market, split equally
/// among the firms tied there.
pub fn stage_profits(prices: &[f64], game: &StageGame) -> Result<Vec<f64>> {
    if prices.len() != game.n_firms {
        return Err(Error::pre(format!("stage_profits: {} prices for {} firms", prices.len(), game.n_firms)));
    }
    if prices.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::pre("stage_profits: prices must be finite and >= 0"));
    }
    let p_min = prices.iter().copied().fold(f64::INFINITY, f64::min);
    let tied = prices.iter().filter(|&&p| p == p_min).count() as f64;
    let q = game.demand(p_min) / tied;
    Ok(prices
        .iter()
        .map(|&p| if p == p_min { q * (p - game.unit_cost) } else { 0.0 })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Cooperate,
    /// `None` means punishment never ends.
    Punish { remaining: Option<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    GrimTrigger { p_collude: f64, p_punish: f64, trigger_threshold: f64 },
    AbreuStickCarrot { p_collude: f64, p_stick: f64, k_stick: u32, trigger_threshold: f64 },
    LimitSchedule { first: f64, second: f64, third: f64 },
    ConstantPrice { price: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMachine {
    strategy: Strategy,
    phase: Phase,
    periods_seen: usize,
}

impl StrategyMachine {
    pub fn new(strategy: Strategy) -> Result<Self> {
        match strategy {
            Strategy::GrimTrigger { p_collude, p_punish, .. } if p_punish > p_collude => {
                return Err(Error::invalid("strategy.p_punish", "must not exceed the collusive price"));
            }
            Strategy::AbreuStickCarrot { k_stick: 0, .. } => {
                return Err(Error::invalid("strategy.k_stick", "must be >= 1"));
            }
            _ => {}
        }
        Ok(StrategyMachine { strategy, phase: Phase::Cooperate, periods_seen: 0 })
    }

    /// Grim trigger at the monopoly price with Bertrand reversion.
    pub fn grim(game: &StageGame) -> Self {
        let p_collude = game.monopoly_price();
        StrategyMachine::new(Strategy::GrimTrigger {
            p_collude,
            p_punish: game.unit_cost,
            trigger_threshold: game.default_threshold(p_collude),
        })
        .expect("monopoly price is above cost")
    }

    pub fn abreu(game: &StageGame, p_stick: f64, k_stick: u32) -> Result<Self> {
        let p_collude = game.monopoly_price();
        StrategyMachine::new(Strategy::AbreuStickCarrot {
            p_collude,
            p_stick,
            k_stick,
            trigger_threshold: game.default_threshold(p_collude),
        })
    }

    pub fn constant(price: f64) -> Self {
        StrategyMachine { strategy: Strategy::ConstantPrice { price }, phase: Phase::Cooperate, periods_seen: 0 }
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn price(&self) -> f64 {
        match (self.strategy, self.phase) {
            (Strategy::GrimTrigger { p_collude, .. }, Phase::Cooperate) => p_collude,
            (Strategy::GrimTrigger { p_punish, .. }, Phase::Punish { .. }) => p_punish,
            (Strategy::AbreuStickCarrot { p_collude, .. }, Phase::Cooperate) => p_collude,
            (Strategy::AbreuStickCarrot { p_stick, .. }, Phase::Punish { .. }) => p_stick,
            (Strategy::LimitSchedule { first, second, third }, _) => match self.periods_seen {
                0 => first,
                1 => second,
                _ => third,
            },
            (Strategy::ConstantPrice { price }, _) => price,
        }
    }

    /// Updates the phase after seeing this period's public signal.
    pub fn observe(&mut self, signal: f64) {
        self.periods_seen += 1;
        self.phase = match (self.strategy, self.phase) {
            (Strategy::GrimTrigger { trigger_threshold, .. }, Phase::Cooperate) if signal < trigger_threshold => {
                Phase::Punish { remaining: None }
            }
            (Strategy::AbreuStickCarrot { trigger_threshold, k_stick, .. }, Phase::Cooperate)
                if signal < trigger_threshold =>
            {
                Phase::Punish { remaining: Some(k_stick) }
            }
            // stick periods ignore the signal; the stick itself is below the trigger
            (_, Phase::Punish { remaining: Some(n) }) if n <= 1 => Phase::Cooperate,
            (_, Phase::Punish { remaining: Some(n) }) => Phase::Punish { remaining: Some(n - 1) },
            (_, phase) => phase,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayRecord {
    /// `prices[t][i]`
    pub prices: Vec<Vec<f64>>,
    /// `payoffs[t][i]`
    pub payoffs: Vec<Vec<f64>>,
    pub signals: Vec<f64>,
    /// Per firm, `sum_t delta^t payoff`, first period undiscounted.
    pub discounted: Vec<f64>,
}

pub fn play_repeated(
    game: &StageGame,
    machines: &mut [StrategyMachine],
    periods: usize,
    delta: f64,
    seed: u64,
) -> Result<PlayRecord> {
    if periods == 0 {
        return Err(Error::pre("play_repeated: need at least one period"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::pre("play_repeated: delta must lie in (0, 1)"));
    }
    if machines.len() != game.n_firms {
        return Err(Error::pre("play_repeated: one machine per firm required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if game.noise_sigma > 0.0 {
        Some(Normal::new(0.0, game.noise_sigma).map_err(|e| Error::pre(e.to_string()))?)
    } else {
        None
    };
    let mut rec = PlayRecord {
        prices: Vec::with_capacity(periods),
        payoffs: Vec::with_capacity(periods),
        signals: Vec::with_capacity(periods),
        discounted: vec![0.0; game.n_firms],
    };
    let mut weight = 1.0;
    for _ in 0..periods {
        let prices: Vec<f64> = machines.iter().map(|m| m.price().max(0.0)).collect();
        let profits = stage_profits(&prices, game)?;
        let p_min = prices.iter().copied().fold(f64::INFINITY, f64::min);
        let signal = p_min + noise.map_or(0.0, |n| n.sample(&mut rng));
        for m in machines.iter_mut() {
            m.observe(signal);
        }
        for (acc, pi) in rec.discounted.iter_mut().zip(&profits) {
            *acc += weight * pi;
        }
        weight *= delta;
        rec.prices.push(prices);
        rec.payoffs.push(profits);
        rec.signals.push(signal);
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalDiscount {
    pub delta: f64,
    /// A single firm has nobody to deter.
    pub degenerate: bool,
}

/// Smallest discount factor sustaining monopoly collusion under grim
/// reversion: `1 - 1/n`. The closed form is cross-checked against a
/// bisection over simulated deviation payoffs.
pub fn critical_discount_grim(game: &StageGame) -> Result<CriticalDiscount> {
    if game.n_firms < 2 {
        return Ok(CriticalDiscount { delta: 0.0, degenerate: true });
    }
    let analytic = 1.0 - 1.0 / game.n_firms as f64;
    let noiseless = StageGame { noise_sigma: 0.0, ..*game };
    let (mut lo, mut hi) = (1e-3, 1.0 - 1e-3);
    let mut iterations = 0;
    while hi - lo > GRIM_CHECK_TOL / 4.0 {
        let mid = 0.5 * (lo + hi);
        if grim_compliance_gap(&noiseless, mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let simulated = 0.5 * (lo + hi);
    if (simulated - analytic).abs() > GRIM_CHECK_TOL {
        return Err(Error::NonConvergence {
            what: "grim threshold cross-check",
            iterations,
            last_change: (simulated - analytic).abs(),
            last_iterate: vec![simulated, analytic],
        });
    }
    Ok(CriticalDiscount { delta: analytic, degenerate: false })
}

/// Periods after which `delta^t` is negligible.
fn horizon(delta: f64) -> usize {
    ((1e-13f64).ln() / delta.ln()).ceil().clamp(10.0, 50_000.0) as usize
}

/// Compliance value minus one-shot deviation value for firm 0 when all
/// rivals play grim trigger (simulated).
pub fn grim_compliance_gap(game: &StageGame, delta: f64) -> Result<f64> {
    let t = horizon(delta);
    let mut comply: Vec<_> = (0..game.n_firms).map(|_| StrategyMachine::grim(game)).collect();
    let v_comply = play_repeated(game, &mut comply, t, delta, 0)?.discounted[0];
    let mut deviate = comply.iter().map(|_| StrategyMachine::grim(game)).collect::<Vec<_>>();
    deviate[0] = StrategyMachine::constant(game.monopoly_price() - DEVIATION_EPS);
    let v_deviate = play_repeated(game, &mut deviate, t, delta, 0)?.discounted[0];
    Ok(v_comply - v_deviate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbreuThreshold {
    /// Smallest sustaining discount factor; 1 when `too_weak`.
    pub delta: f64,
    /// No discount factor below one sustains collusion.
    pub too_weak: bool,
    /// Continuation value of entering the stick phase is non-negative at
    /// `delta`, so punishers do not prefer exit.
    pub stick_credible: bool,
}

/// Value of entering a stick of `k` periods at per-firm stick profit
/// `stick_profit`, followed by collusion worth `v_collude`.
pub fn abreu_punishment_value(stick_profit: f64, k: u32, delta: f64, v_collude: f64) -> f64 {
    let stick: f64 = (0..k).map(|j| delta.powi(j as i32) * stick_profit).sum();
    stick + delta.powi(k as i32) * v_collude
}

/// Slack in the collusive-phase no-deviation constraint for an Abreu
/// stick-and-carrot code. Non-negative means collusion is sustained.
pub fn abreu_slack(game: &StageGame, p_stick: f64, k_stick: u32, delta: f64) -> f64 {
    let n = game.n_firms as f64;
    let share = game.monopoly_profit() / n;
    let v_collude = share / (1.0 - delta);
    let stick_profit = game.market_profit(p_stick) / n;
    let v_punish = abreu_punishment_value(stick_profit, k_stick, delta, v_collude);
    v_collude - (game.monopoly_profit() + delta * v_punish)
}

pub fn abreu_critical(game: &StageGame, p_stick: f64, k_stick: u32) -> Result<AbreuThreshold> {
    if p_stick > game.unit_cost {
        return Err(Error::pre("abreu_critical: stick price must not exceed unit cost"));
    }
    if k_stick == 0 {
        return Err(Error::pre("abreu_critical: k_stick must be >= 1"));
    }
    if game.n_firms < 2 {
        return Ok(AbreuThreshold { delta: 0.0, too_weak: false, stick_credible: true });
    }
    const SCAN: usize = 10_000;
    let found = (1..SCAN)
        .map(|i| i as f64 / SCAN as f64)
        .find(|&d| abreu_slack(game, p_stick, k_stick, d) >= 0.0);
    let Some(upper) = found else {
        return Ok(AbreuThreshold { delta: 1.0, too_weak: true, stick_credible: true });
    };
    let (mut lo, mut hi) = (upper - 1.0 / SCAN as f64, upper);
    if lo > 0.0 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if abreu_slack(game, p_stick, k_stick, mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let n = game.n_firms as f64;
    let v_collude = game.monopoly_profit() / n / (1.0 - hi);
    let v_punish = abreu_punishment_value(game.market_profit(p_stick) / n, k_stick, hi, v_collude);
    Ok(AbreuThreshold { delta: hi, too_weak: false, stick_credible: v_punish >= 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entrant {
    pub unit_cost: f64,
    pub entry_fee: f64,
    pub in_market: bool,
}

impl Entrant {
    pub fn new(unit_cost: f64, entry_fee: f64) -> Result<Self> {
        if !(unit_cost >= 0.0) {
            return Err(Error::invalid("entrant.unit_cost", "must be >= 0"));
        }
        if !(entry_fee >= 0.0) {
            return Err(Error::invalid("entrant.entry_fee", "must be >= 0"));
        }
        Ok(Entrant { unit_cost, entry_fee, in_market: false })
    }
}

/// Entry profit net of the fee; entry pays iff this is positive.
pub fn entrant_profit(price: f64, quantity: f64, entrant: &Entrant) -> Result<f64> {
    if !(quantity >= 0.0) {
        return Err(Error::pre("entrant_profit: quantity must be >= 0"));
    }
    Ok(quantity * (price - entrant.unit_cost) - entrant.entry_fee)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePeriodPlan {
    pub first: f64,
    pub second: f64,
    pub third: f64,
    /// Incumbent market profit in each of the three periods.
    pub profits: [f64; 3],
    /// No grid price keeps the entrant out.
    pub undeterrable: bool,
}

impl ThreePeriodPlan {
    pub fn machine(&self) -> StrategyMachine {
        StrategyMachine {
            strategy: Strategy::LimitSchedule { first: self.first, second: self.second, third: self.third },
            phase: Phase::Cooperate,
            periods_seen: 0,
        }
    }
}

/// Monopoly price, then the highest grid price at which an entrant
/// neither matching it nor undercutting by one grid step can profit,
/// then recovery.
pub fn three_period_schedule(game: &StageGame, entrant: &Entrant) -> Result<ThreePeriodPlan> {
    if !(game.monopoly_price() > entrant.unit_cost) {
        return Err(Error::pre("three_period_schedule: monopoly price must exceed the entrant's cost"));
    }
    let grid = game.price_grid(PRICE_GRID_POINTS);
    let step = grid[1] - grid[0];
    let first = grid
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, grid[0]), |(best, arg), p| {
            let v = game.market_profit(p);
            if v > best { (v, p) } else { (best, arg) }
        })
        .1;
    let mut deterring = None;
    for &p in &grid {
        let p_e = (p - step).max(0.0);
        let matched = entrant_profit(p, game.demand(p), entrant)?;
        let undercut = entrant_profit(p_e, game.demand(p_e), entrant)?;
        if matched <= 0.0 && undercut <= 0.0 {
            deterring = Some(p);
        }
    }
    let (second, undeterrable) = match deterring {
        Some(p) => (p.min(first), false),
        None => (game.unit_cost, true),
    };
    let third = first;
    Ok(ThreePeriodPlan {
        first,
        second,
        third,
        profits: [game.market_profit(first), game.market_profit(second), game.market_profit(third)],
        undeterrable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceDecision {
    Undercut,
    Collude,
}

pub fn undercut_vs_collude(undercut_profit: f64, collude_profit: f64) -> Result<PriceDecision> {
    if !(undercut_profit.is_finite() && collude_profit.is_finite()) {
        return Err(Error::pre("undercut_vs_collude: inputs must be finite"));
    }
    Ok(if undercut_profit > collude_profit { PriceDecision::Undercut } else { PriceDecision::Collude })
}
