//! Period-by-period simulation of the labour market with optional pricing
//! game, steady-state detection, Beveridge points and the balanced-growth
//! solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bargaining::{
    employment_value, nash_bargain, reversion_check, staggered_update, unemployment_value, BargainOutcome,
    DisagreementPoint, WageContract, WageGrid,
};
use crate::firm::{self, FirmState, HiringAction, HiringKind, TechShock};
use crate::mobility::{self, Admission, PopulationStats, VacancyBand};
use crate::model::{Aggregates, HouseholdState, Params};
use crate::pricing::{StageGame, StrategyMachine};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// One period of the simulation. Output, knowledge and labour refer to
/// production at the start of the period; headcounts and vacancies to the
/// labour market after hiring.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub t: usize,
    pub output: f64,
    pub knowledge: f64,
    pub capital: f64,
    pub labor: f64,
    pub wage: f64,
    pub price: f64,
    pub employed: u64,
    pub unemployed: u64,
    /// Openings available for matching this period.
    pub vacancies: u64,
    pub hiring_rate_mean: f64,
    pub u_rate: f64,
    pub v_rate: f64,
    /// Lowest price posted in the pricing game, when one is configured.
    pub game_price: Option<f64>,
    /// Entrants hired for the first time.
    pub admissions: u64,
    pub structural_unemployed: u64,
    pub households: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub rows: Vec<PeriodRecord>,
    /// First period after the last shock window, 0 without shocks.
    pub settle_from: usize,
    pub steady_window: usize,
    pub steady_tol: f64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Aggregate wage at the steady state reached after the last shock.
    pub fn steady_wage(&self) -> Result<f64> {
        let ss = detect_steady_state_in(self, self.settle_from, self.rows.len(), self.steady_window, self.steady_tol)?
            .ok_or_else(|| Error::pre("no steady state after the last shock"))?;
        Ok(ss.wage)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub period: usize,
    pub wage: f64,
    pub employed: f64,
    pub output: f64,
    pub window: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
struct Worker {
    state: HouseholdState,
    productivity: f64,
    employer: Option<usize>,
    /// Has held a job; incumbents are not re-scored.
    incumbent: bool,
    /// Period of the last job loss; matching serves the longest waiting first.
    unemployed_since: usize,
}

struct Firm {
    state: FirmState,
    contract: WageContract,
    /// Expansion openings; these lapse when unfilled.
    expansion: u32,
    last_mrpl: f64,
    last_rate: f64,
}

/// Mutable simulation state.
pub struct Economy {
    workers: Vec<Worker>,
    firms: Vec<Firm>,
    knowledge: f64,
    wage: Option<f64>,
    game: Option<(StageGame, Vec<StrategyMachine>)>,
    rng: ChaCha8Rng,
}

impl Economy {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let e = &scenario.economy;
        let l = &scenario.labor;
        let h = e.households;
        // evenly spaced productivities, shuffled by a fixed stride
        let workers = (0..h)
            .map(|i| {
                let slot = ((i * 7919) % h) as f64 + 0.5;
                let productivity = e.productivity_min + (e.productivity_max - e.productivity_min) * slot / h as f64;
                let employer = (i < e.initial_employed).then_some(i % l.firms);
                Worker {
                    state: HouseholdState {
                        wealth: 0.0,
                        employed: employer.is_some(),
                        wage: 0.0,
                        effort: 1.0,
                        score: 0.5,
                        tenure: 0,
                    },
                    productivity,
                    employer,
                    incumbent: employer.is_some(),
                    unemployed_since: 0,
                }
            })
            .collect::<Vec<_>>();
        let firms = (0..l.firms)
            .map(|f| {
                let heads = workers.iter().filter(|w| w.employer == Some(f)).count() as u32;
                Ok(Firm {
                    state: FirmState::new(l.capital_per_firm, heads, e.price, l.n_window, 0.0)?,
                    contract: WageContract::new(0.0, 0)?,
                    expansion: 0,
                    last_mrpl: 0.0,
                    last_rate: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let game = match &scenario.pricing {
            Some(p) => Some((p.game()?, p.machines()?)),
            None => None,
        };
        Ok(Economy {
            workers,
            firms,
            knowledge: e.knowledge,
            wage: None,
            game,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        })
    }

    pub fn wage(&self) -> Option<f64> {
        self.wage
    }

    pub fn employed(&self) -> u64 {
        self.workers.iter().filter(|w| w.employer.is_some()).count() as u64
    }

    fn staff(&self, f: usize) -> Vec<usize> {
        (0..self.workers.len()).filter(|&i| self.workers[i].employer == Some(f)).collect()
    }

    fn release(&mut self, i: usize, t: usize) {
        let w = &mut self.workers[i];
        w.unemployed_since = t;
        w.employer = None;
        w.state.employed = false;
        w.state.tenure = 0;
    }

    /// Advances one period and returns its record.
    pub fn step(&mut self, scenario: &Scenario, t: usize) -> Result<PeriodRecord> {
        self.step_inner(scenario, t).map_err(|e| e.at_period(t))
    }

    fn step_inner(&mut self, scenario: &Scenario, t: usize) -> Result<PeriodRecord> {
        if t >= scenario.periods {
            return Err(Error::pre("step: t beyond the scenario horizon"));
        }
        let params = &scenario.params;
        let labor_cfg = &scenario.labor;
        let policy = &scenario.mobility;
        let h = self.workers.len() as u64;

        // (1) technology shocks act on the base stock without compounding
        let mut agg = Aggregates::new(h, self.employed(), h - self.employed(), self.knowledge, 1.0, 1.0, 1.0, scenario.economy.price)?;
        for shock in &scenario.shocks {
            agg = firm::apply_tech_shock(&agg, shock, t)?;
        }
        let knowledge = agg.knowledge();

        // exogenous separations, longest tenure first, leave replacement openings
        for f in 0..self.firms.len() {
            let mut staff = self.staff(f);
            staff.sort_by_key(|&i| (std::cmp::Reverse(self.workers[i].state.tenure), i));
            let quits = (params.b * staff.len() as f64).round() as usize;
            for &i in staff.iter().take(quits) {
                self.release(i, t);
            }
            let firm = &mut self.firms[f].state;
            firm.employed -= quits as u32;
            firm.vacancies += quits as u32;
        }

        // (2) production, marginal product, reservation productivity
        let mut output = 0.0;
        let mut labor_total = 0.0;
        let mut capital_total = 0.0;
        for firm in &mut self.firms {
            let s = &firm.state;
            let labor = s.effort * s.employed as f64;
            output += firm::output(s.capital, labor, knowledge, params.alpha_exp, firm::Technology::CobbDouglas)?;
            labor_total += labor;
            capital_total += s.capital;
            firm.last_mrpl = if s.employed > 0 {
                firm::mrpl(s, knowledge, params.alpha_exp)?
            } else {
                firm::mrpl(&FirmState { employed: 1, ..s.clone() }, knowledge, params.alpha_exp)?
            };
            if firm.state.mrpl_history.is_empty() {
                for _ in 0..firm.state.n_window {
                    firm.state.record_mrpl(firm.last_mrpl);
                }
            }
        }

        // (3) hiring decisions under job protection
        for f in 0..self.firms.len() {
            let x = self.firms[f].last_mrpl;
            let x_bar = firm::reservation_productivity(&self.firms[f].state)?;
            let action = firm::hiring_decision(x, x_bar, &self.firms[f].state, params)?;
            self.firms[f].last_rate = action.rate;
            self.firms[f].expansion = 0;
            match action.kind {
                HiringKind::PostVacancies(n) => self.firms[f].expansion = n,
                HiringKind::Hold => {}
                HiringKind::DestroyJobs(d) => {
                    let cancelled = d.min(self.firms[f].state.vacancies);
                    self.firms[f].state.vacancies -= cancelled;
                    let rest = d - cancelled;
                    if rest > 0 {
                        let mut staff = self.staff(f);
                        staff.sort_by_key(|&i| (self.workers[i].state.tenure, i));
                        let tenures: Vec<u32> = staff.iter().map(|&i| self.workers[i].state.tenure).collect();
                        let wanted = HiringAction { kind: HiringKind::DestroyJobs(rest), ..action };
                        if let HiringKind::DestroyJobs(n) = mobility::job_protection_filter(wanted, &tenures, policy).kind {
                            let fired: Vec<usize> = staff
                                .into_iter()
                                .filter(|&i| policy.protection_tenure.is_none_or(|lim| self.workers[i].state.tenure < lim))
                                .take(n as usize)
                                .collect();
                            for &i in &fired {
                                self.release(i, t);
                            }
                            self.firms[f].state.employed -= fired.len() as u32;
                        }
                    }
                }
            }
            self.firms[f].state.record_mrpl(x);
        }

        // (4) scoring, admission and frictional matching
        let offers: Vec<f64> = self.firms.iter().map(|f| self.wage.unwrap_or(f.last_mrpl)).collect();
        let stats = PopulationStats {
            max_productivity: self.workers.iter().map(|w| w.productivity).fold(0.0, f64::max),
            max_wage: offers.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE),
        };
        let bands: Vec<VacancyBand> = offers
            .iter()
            .enumerate()
            .map(|(f, &w)| VacancyBand::new(f as u64, policy.band_floor, 1.0 - mobility::SCORE_EPS, w))
            .collect::<Result<_>>()?;
        let mut eligible = Vec::new();
        let mut structural = 0u64;
        for i in 0..self.workers.len() {
            if self.workers[i].employer.is_some() {
                continue;
            }
            if self.workers[i].incumbent {
                eligible.push(i);
                continue;
            }
            let score = mobility::score_worker(self.workers[i].productivity, stats.max_wage, policy, stats)?;
            self.workers[i].state.score = score.value();
            match mobility::admit(score, &bands) {
                Admission::Matched(_) => eligible.push(i),
                Admission::StructurallyUnemployed => structural += 1,
            }
        }
        eligible.sort_by_key(|&i| (self.workers[i].unemployed_since, i));
        let openings: Vec<u32> = self.firms.iter().map(|f| f.state.vacancies + f.expansion).collect();
        let v_total: u64 = openings.iter().map(|&o| o as u64).sum();
        let u_pool = eligible.len() as u64;
        let matches = if u_pool > 0 && v_total > 0 {
            let eta = labor_cfg.matching_elasticity;
            let m = labor_cfg.matching_efficiency * (u_pool as f64).powf(eta) * (v_total as f64).powf(1.0 - eta);
            (m.floor() as u64).min(u_pool).min(v_total)
        } else {
            0
        };
        let allocation = largest_remainder(matches, &openings);
        let mut next_hire = eligible.into_iter();
        let mut admissions = 0u64;
        for (f, &n) in allocation.iter().enumerate() {
            for _ in 0..n {
                let i = next_hire.next().expect("matches never exceed the eligible pool");
                let w = &mut self.workers[i];
                if !w.incumbent {
                    admissions += 1;
                }
                w.employer = Some(f);
                w.incumbent = true;
                w.state.employed = true;
                w.state.tenure = 0;
            }
            let firm = &mut self.firms[f];
            firm.state.employed += n as u32;
            firm.state.vacancies -= (n as u32).min(firm.state.vacancies);
            firm.expansion = 0;
        }
        for w in &mut self.workers {
            if w.employer.is_some() {
                w.state.tenure += 1;
            }
        }

        // (5) bargaining over the mean marginal product, staggered adjustment
        let f_rate = if u_pool > 0 { matches as f64 / u_pool as f64 } else { 0.0 };
        let x_mean = self.firms.iter().map(|f| f.last_mrpl).sum::<f64>() / self.firms.len() as f64;
        let reference = self.wage.unwrap_or(labor_cfg.initial_wage_ratio * x_mean);
        let (r, b) = (params.r, params.b);
        let v_u = unemployment_value(labor_cfg.benefit, f_rate, employment_value(reference, r, b)?, r)?;
        let grid = WageGrid::linspace(0.0, x_mean, labor_cfg.wage_grid_points)?;
        let outcome = nash_bargain(
            |w| w / (r + b),
            |w| (x_mean - w) / (r + b),
            DisagreementPoint { z_e: v_u, z_f: 0.0 },
            params.beta_power,
            &grid,
        )?;
        let target = match outcome {
            BargainOutcome::Agreement { wage, .. } => wage,
            BargainOutcome::Disagreement => reference,
        };
        let wage = match self.wage {
            Some(prev) => staggered_update(prev, target, params.lambda_reneg),
            None => target,
        };
        self.wage = Some(wage);
        for firm in &mut self.firms {
            // a firm whose marginal product cannot cover the agreed wage pays less
            let agreed = WageContract { wage, promised_wage: wage, ..firm.contract };
            let paid = wage.min(firm.last_mrpl);
            let next = reversion_check(&agreed, paid, labor_cfg.punishment_effort, labor_cfg.punishment_periods)?;
            firm.contract = next;
            firm.state.effort = next.effort_multiplier;
            firm.state.wage_offer = wage;
        }
        for w in &mut self.workers {
            w.state.wage = if w.employer.is_some() { wage } else { 0.0 };
        }

        // (6) pricing game, watching a signal that moves with technology
        let game_price = match &mut self.game {
            Some((game, machines)) => {
                let prices: Vec<f64> = machines.iter().map(|m| m.price().max(0.0)).collect();
                let p_min = prices.iter().copied().fold(f64::INFINITY, f64::min);
                let noise = if game.noise_sigma > 0.0 {
                    Normal::new(0.0, game.noise_sigma).map_err(|e| Error::pre(e.to_string()))?.sample(&mut self.rng)
                } else {
                    0.0
                };
                let signal = p_min * knowledge / self.knowledge + noise;
                for m in machines.iter_mut() {
                    m.observe(signal);
                }
                Some(p_min)
            }
            None => None,
        };

        // (7) knowledge grows with first-time entrants
        self.knowledge = mobility::knowledge_update(self.knowledge, admissions as f64 / h as f64, policy)?;

        // (8) record
        let employed = self.employed();
        let unemployed = h - employed;
        debug_assert_eq!(employed + unemployed, h);
        Ok(PeriodRecord {
            t,
            output,
            knowledge,
            capital: capital_total,
            labor: labor_total,
            wage,
            price: scenario.economy.price,
            employed,
            unemployed,
            vacancies: v_total,
            hiring_rate_mean: self.firms.iter().map(|f| f.last_rate).sum::<f64>() / self.firms.len() as f64,
            u_rate: unemployed as f64 / h as f64,
            v_rate: v_total as f64 / h as f64,
            game_price,
            admissions,
            structural_unemployed: structural,
            households: h,
        })
    }
}

/// Splits `total` over `weights` proportionally, rounding by largest
/// remainder (ties to the lower index). Never exceeds a weight when
/// `total <= sum(weights)`.
pub fn largest_remainder(total: u64, weights: &[u32]) -> Vec<u64> {
    let sum: u64 = weights.iter().map(|&w| w as u64).sum();
    if sum == 0 || total == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<u64> = weights.iter().map(|&w| total * w as u64 / sum).collect();
    let mut rest: Vec<(u64, usize)> = weights.iter().enumerate().map(|(i, &w)| ((total * w as u64) % sum, i)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = total - out.iter().sum::<u64>();
    for &(_, i) in rest.iter().take(left as usize) {
        out[i] += 1;
    }
    out
}

pub fn run(scenario: &Scenario) -> Result<TimeSeries> {
    let mut economy = Economy::new(scenario)?;
    let rows = (0..scenario.periods).map(|t| economy.step(scenario, t)).collect::<Result<Vec<_>>>()?;
    for row in &rows {
        if row.employed + row.unemployed != row.households {
            return Err(Error::pre("accounting identity violated").at_period(row.t));
        }
    }
    Ok(TimeSeries {
        rows,
        settle_from: last_shock_end(&scenario.shocks),
        steady_window: scenario.output.steady_window,
        steady_tol: scenario.output.steady_tol,
    })
}

pub fn last_shock_end(shocks: &[TechShock]) -> usize {
    shocks.iter().map(|s| s.start + s.duration).max().unwrap_or(0)
}

pub fn detect_steady_state(series: &TimeSeries, window: usize, tol: f64) -> Result<Option<SteadyState>> {
    detect_steady_state_in(series, 0, series.rows.len(), window, tol)
}

/// Earliest period in `[from, to)` from which every window of the tracked
/// aggregates (wage, employment, output) has relative range below `tol`.
pub fn detect_steady_state_in(
    series: &TimeSeries,
    from: usize,
    to: usize,
    window: usize,
    tol: f64,
) -> Result<Option<SteadyState>> {
    if window < 2 {
        return Err(Error::pre("detect_steady_state: window must be >= 2"));
    }
    let to = to.min(series.rows.len());
    if from >= to || window > to - from {
        return Err(Error::pre("detect_steady_state: window longer than the series"));
    }
    let rows = &series.rows[from..to];
    let flat = |s: usize| {
        let w = &rows[s..s + window];
        let tracked: [fn(&PeriodRecord) -> f64; 3] = [|r| r.wage, |r| r.employed as f64, |r| r.output];
        tracked.iter().all(|get| {
            let (lo, hi) = w.iter().map(get).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let scale = get(&w[0]).abs().max(f64::MIN_POSITIVE);
            (hi - lo) / scale < tol
        })
    };
    let last_start = rows.len() - window;
    let mut earliest = None;
    for s in (0..=last_start).rev() {
        if flat(s) {
            earliest = Some(s);
        } else {
            break;
        }
    }
    Ok(earliest.map(|s| {
        let end = &rows[rows.len() - 1];
        SteadyState {
            period: from + s,
            wage: end.wage,
            employed: end.employed as f64,
            output: end.output,
            window,
            tol,
        }
    }))
}

pub fn beveridge_points(series: &TimeSeries) -> Result<Vec<(f64, f64)>> {
    if series.rows.is_empty() {
        return Err(Error::pre("beveridge_points: empty series"));
    }
    Ok(series.rows.iter().map(|r| (r.u_rate, r.v_rate)).collect())
}

/// Periods for the wage gap to the final steady wage to halve, counted
/// from its peak at or after `from`.
pub fn wage_gap_half_life(series: &TimeSeries, from: usize) -> Result<Option<usize>> {
    if from >= series.rows.len() {
        return Err(Error::pre("wage_gap_half_life: start beyond the series"));
    }
    let target = series.rows.last().expect("non-empty").wage;
    let gaps: Vec<f64> = series.rows[from..].iter().map(|r| (r.wage - target).abs()).collect();
    let (peak_at, peak) = gaps.iter().copied().enumerate().fold((0, 0.0), |best, (i, g)| if g > best.1 { (i, g) } else { best });
    if peak == 0.0 {
        return Ok(Some(0));
    }
    Ok(gaps[peak_at..].iter().position(|&g| g <= 0.5 * peak))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BargainSpec {
    pub beta_power: f64,
    /// Flow value of unemployment; pins the nominal wage level.
    pub benefit: f64,
    pub job_finding: f64,
    pub labor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancedGrowth {
    /// Nominal wage.
    pub wage: f64,
    pub price: f64,
    pub capital: f64,
    pub labor: f64,
    pub output: f64,
    pub real_wage: f64,
    pub mpl: f64,
    pub mpk: f64,
    pub iterations: usize,
}

impl BalancedGrowth {
    pub fn labor_residual(&self) -> f64 {
        (self.mpl - self.wage / self.price).abs()
    }

    pub fn capital_residual(&self, r: f64) -> f64 {
        (self.mpk - r).abs()
    }
}

/// Nash bargain over a nominal wage, refined by zooming the grid around
/// the argmax.
fn refined_bargain(worker: impl Fn(f64) -> f64, firm: impl Fn(f64) -> f64, d: DisagreementPoint, beta: f64, hi: f64) -> Result<Option<f64>> {
    let (mut lo, mut up) = (0.0, hi);
    let mut best = None;
    for _ in 0..6 {
        let grid = WageGrid::linspace(lo, up, 201)?;
        let step = (up - lo) / 200.0;
        match nash_bargain(&worker, &firm, d, beta, &grid)?.wage() {
            Some(w) => {
                best = Some(w);
                lo = (w - step).max(0.0);
                up = (w + step).min(hi);
            }
            None => return Ok(best),
        }
    }
    Ok(best)
}

/// Steady state with capital at its first-order condition `MPK = r`, price
/// set so the real wage equals the marginal product of labour, and the
/// nominal wage re-bargained until it stops moving.
pub fn balanced_growth_solve(params: &Params, knowledge: f64, spec: &BargainSpec) -> Result<BalancedGrowth> {
    params.validate()?;
    if !(knowledge > 0.0) {
        return Err(Error::pre("balanced_growth_solve: knowledge must be > 0"));
    }
    if !(spec.benefit > 0.0 && spec.labor > 0.0) {
        return Err(Error::pre("balanced_growth_solve: need benefit > 0 and labour > 0"));
    }
    let (a, r, b) = (params.alpha_exp, params.r, params.b);
    let capital = (a * knowledge / r).powf(1.0 / (1.0 - a)) * spec.labor;
    let output = knowledge * capital.powf(a) * spec.labor.powf(1.0 - a);
    let mpl = (1.0 - a) * output / spec.labor;
    let mpk = a * output / capital;

    const MAX_ITERS: usize = 10_000;
    let mut price = 1.0;
    let mut wage = price * mpl;
    let mut change = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let v_u = unemployment_value(spec.benefit, spec.job_finding, employment_value(wage, r, b)?, r)?;
        let nominal_mpl = price * mpl;
        let next = refined_bargain(
            |w| w / (r + b),
            |w| (nominal_mpl - w) / (r + b),
            DisagreementPoint { z_e: v_u, z_f: 0.0 },
            spec.beta_power,
            nominal_mpl,
        )?
        .unwrap_or(nominal_mpl);
        change = (next - wage).abs().max((next / mpl - price).abs());
        wage = next;
        price = wage / mpl;
        if change < params.tol {
            return Ok(BalancedGrowth {
                wage,
                price,
                capital,
                labor: spec.labor,
                output,
                real_wage: wage / price,
                mpl,
                mpk,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence { what: "balanced growth", iterations: MAX_ITERS, last_change: change, last_iterate: vec![wage, price] })
}
