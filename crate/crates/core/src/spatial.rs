//! Price competition on a unit circle, coalitions of adjacent firms and
//! consumer lock-in through switching costs.

use crate::{Error, Result};

const GRID_POINTS: usize = 4001;
const BR_TOL: f64 = 1e-10;
const BR_MAX_ITERS: usize = 5000;
const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CircleMarket {
    /// Counterclockwise positions in `[0, 1)`.
    positions: Vec<f64>,
    pub tau: f64,
    pub unit_cost: f64,
    pub switch_cost: f64,
}

impl CircleMarket {
    pub fn new(positions: Vec<f64>, tau: f64, unit_cost: f64, switch_cost: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::invalid("market.positions", "need at least 2 firms"));
        }
        if positions.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::invalid("market.positions", "must lie in [0, 1)"));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("market.positions", "must be distinct and increasing"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("market.tau", "must be > 0"));
        }
        if !(unit_cost >= 0.0) {
            return Err(Error::invalid("market.unit_cost", "must be >= 0"));
        }
        if !(switch_cost >= 0.0) {
            return Err(Error::invalid("market.switch_cost", "must be >= 0"));
        }
        Ok(CircleMarket { positions, tau, unit_cost, switch_cost })
    }

    pub fn equally_spaced(n: usize, tau: f64, unit_cost: f64, switch_cost: f64) -> Result<Self> {
        let positions = (0..n).map(|i| i as f64 / n as f64).collect();
        CircleMarket::new(positions, tau, unit_cost, switch_cost)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn n_firms(&self) -> usize {
        self.positions.len()
    }
}

/// Counterclockwise distance from `a` to `b`.
fn ccw(a: f64, b: f64) -> f64 {
    (b - a).rem_euclid(1.0)
}

fn arc_lengths(positions: &[f64]) -> Vec<f64> {
    let n = positions.len();
    (0..n)
        .map(|k| {
            let d = ccw(positions[k], positions[(k + 1) % n]);
            if d == 0.0 { 1.0 } else { d }
        })
        .collect()
}

/// Arc `k` runs from firm `k` to firm `k + 1`. `locked` holds the
/// incumbent affiliation boundary per arc, measured from its left end.
struct Layout {
    arcs: Vec<f64>,
    tau: f64,
    unit_cost: f64,
    locked: Option<(Vec<f64>, f64)>,
}

impl Layout {
    /// Mass on arc `k` served by its left-end firm.
    fn left_mass(&self, k: usize, p_left: f64, p_right: f64) -> f64 {
        let d = self.arcs[k];
        let x0 = (p_right - p_left + self.tau * d) / (2.0 * self.tau);
        match &self.locked {
            None => x0.clamp(0.0, d),
            Some((bounds, t)) => {
                let b = bounds[k];
                let keep = (x0 + t).clamp(0.0, d).min(b);
                let gain = ((x0 - t).clamp(0.0, d) - b).max(0.0);
                keep + gain
            }
        }
    }

    fn share(&self, i: usize, own: f64, prices: &[f64]) -> f64 {
        let n = self.arcs.len();
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let right = self.left_mass(i, own, prices[next]);
        let left = self.arcs[prev] - self.left_mass(prev, prices[prev], own);
        right + left
    }

    fn shares(&self, prices: &[f64]) -> Vec<f64> {
        (0..prices.len()).map(|i| self.share(i, prices[i], prices)).collect()
    }

    fn grid(&self) -> Vec<f64> {
        let hi = 2.0 * self.tau;
        (0..GRID_POINTS).map(|g| self.unit_cost + hi * g as f64 / (GRID_POINTS - 1) as f64).collect()
    }

    fn best_response(&self, i: usize, prices: &[f64], grid: &[f64]) -> f64 {
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &p in grid {
            let v = (p - self.unit_cost) * self.share(i, p, prices);
            if v > best.0 {
                best = (v, p);
            }
        }
        best.1
    }

    fn solve(&self) -> Result<Vec<f64>> {
        let grid = self.grid();
        let n = self.arcs.len();
        let mut prices = vec![self.unit_cost + self.tau; n];
        for it in 0..BR_MAX_ITERS {
            let br: Vec<f64> = (0..n).map(|i| self.best_response(i, &prices, &grid)).collect();
            let next: Vec<f64> = prices.iter().zip(&br).map(|(p, b)| DAMPING * p + (1.0 - DAMPING) * b).collect();
            let change = next.iter().zip(&prices).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prices = next;
            if change < BR_TOL {
                // damping only approaches the grid fixed point; report it exactly
                return Ok(br);
            }
            if it + 1 == BR_MAX_ITERS {
                return Err(Error::NonConvergence {
                    what: "circle best response",
                    iterations: BR_MAX_ITERS,
                    last_change: change,
                    last_iterate: prices,
                });
            }
        }
        unreachable!("loop returns on its last iteration")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub prices: Vec<f64>,
    pub shares: Vec<f64>,
    pub profits: Vec<f64>,
}

/// Damped synchronous best-response equilibrium for a market with no
/// prior affiliations.
pub fn salop_equilibrium(market: &CircleMarket) -> Result<Equilibrium> {
    let layout = Layout { arcs: arc_lengths(&market.positions), tau: market.tau, unit_cost: market.unit_cost, locked: None };
    let prices = layout.solve()?;
    let shares = layout.shares(&prices);
    let profits = prices.iter().zip(&shares).map(|(p, s)| (p - market.unit_cost) * s).collect();
    Ok(Equilibrium { prices, shares, profits })
}

/// A block of adjacent firms acting as one at the midpoint of their arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    /// Firm indices in counterclockwise order.
    members: Vec<usize>,
    position: f64,
}

impl Coalition {
    /// `first` and `size` pick `size` firms counterclockwise from `first`.
    pub fn new(market: &CircleMarket, first: usize, size: usize) -> Result<Self> {
        let n = market.n_firms();
        if first >= n {
            return Err(Error::invalid("coalition.first", "no such firm"));
        }
        if size < 2 || size >= n {
            return Err(Error::invalid("coalition.size", format!("must lie in 2..{n}")));
        }
        let members: Vec<usize> = (0..size).map(|j| (first + j) % n).collect();
        let start = market.positions[members[0]];
        let end = market.positions[members[size - 1]];
        let position = (start + 0.5 * ccw(start, end)).rem_euclid(1.0);
        Ok(Coalition { members, position })
    }

    /// Builds from explicit indices, which must form a contiguous block.
    pub fn from_members(market: &CircleMarket, members: &[usize]) -> Result<Self> {
        let n = market.n_firms();
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != members.len() || sorted.iter().any(|&m| m >= n) {
            return Err(Error::invalid("coalition.members", "must be distinct firm indices"));
        }
        let m = sorted.len();
        // the block starts at the one member whose predecessor is outside
        let starts: Vec<usize> = sorted.iter().copied().filter(|&i| !sorted.contains(&((i + n - 1) % n))).collect();
        if starts.len() != 1 {
            return Err(Error::invalid("coalition.members", "must be contiguous on the circle"));
        }
        Coalition::new(market, starts[0], m)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn position(&self) -> f64 {
        self.position
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionReport {
    pub coalition_profit: f64,
    pub standalone_profit_sum: f64,
    pub profitable: bool,
    pub coalition_price: f64,
    pub member_prices_before: Vec<f64>,
    pub coalition_share: f64,
    /// Distances from the merged position to the nearest outside rival
    /// clockwise and counterclockwise.
    pub rival_distances_after: (f64, f64),
    /// Same distances measured from the outermost members before merging.
    pub rival_distances_before: (f64, f64),
    /// Consumer mass that changed affiliation.
    pub diverted_mass: f64,
    /// One minus the coalition share.
    pub outside_share: f64,
    /// Post-merger prices and shares, outsiders in counterclockwise order
    /// with the coalition at `coalition_index`.
    pub prices_after: Vec<f64>,
    pub shares_after: Vec<f64>,
    pub coalition_index: usize,
}

pub fn coalition_evaluate(market: &CircleMarket, coalition: &Coalition) -> Result<CoalitionReport> {
    let n = market.n_firms();
    let pre = salop_equilibrium(market)?;
    let is_member = |i: usize| coalition.members.contains(&i);

    // post-merger firms: outsiders keep their index, the coalition is `usize::MAX`
    let mut post: Vec<(f64, usize)> = (0..n).filter(|&i| !is_member(i)).map(|i| (market.positions[i], i)).collect();
    post.push((coalition.position, usize::MAX));
    post.sort_by(|a, b| a.0.total_cmp(&b.0));
    let identity = |i: usize| if is_member(i) { usize::MAX } else { i };
    let post_pos: Vec<f64> = post.iter().map(|p| p.0).collect();
    let arcs = arc_lengths(&post_pos);
    let m = post.len();

    // pre-merger affiliation boundaries, as absolute locations per pre arc
    let pre_arcs = arc_lengths(&market.positions);
    let pre_layout = Layout { arcs: pre_arcs.clone(), tau: market.tau, unit_cost: market.unit_cost, locked: None };
    let bounds: Vec<f64> = (0..m)
        .map(|k| {
            let (a, b) = (post[k].1, post[(k + 1) % m].1);
            let pre_k = (0..n)
                .find(|&j| identity(j) == a && identity((j + 1) % n) == b)
                .expect("adjacent post-merger firms share a pre-merger boundary");
            let x = pre_layout.left_mass(pre_k, pre.prices[pre_k], pre.prices[(pre_k + 1) % n]);
            let cut = ccw(post_pos[k], market.positions[pre_k]);
            let cut = if cut > 1.0 - 1e-12 { 0.0 } else { cut };
            (cut + x).clamp(0.0, arcs[k])
        })
        .collect();

    // Prices are set as in a fresh market. With lock-in, demand has flat
    // stretches and best responses cycle, so the switching charge only
    // decides which consumers actually move at those prices.
    let fresh = Layout { arcs: arcs.clone(), tau: market.tau, unit_cost: market.unit_cost, locked: None };
    let prices = fresh.solve()?;
    let t = market.switch_cost / (2.0 * market.tau);
    let layout = Layout { arcs, tau: market.tau, unit_cost: market.unit_cost, locked: Some((bounds.clone(), t)) };
    let shares = layout.shares(&prices);
    let ci = post.iter().position(|p| p.1 == usize::MAX).expect("coalition placed");

    let diverted_mass = (0..m)
        .map(|k| (layout.left_mass(k, prices[k], prices[(k + 1) % m]) - bounds[k]).abs())
        .sum();
    let coalition_profit = (prices[ci] - market.unit_cost) * shares[ci];
    let standalone_profit_sum = coalition.members.iter().map(|&i| pre.profits[i]).sum();

    let first = coalition.members[0];
    let last = *coalition.members.last().expect("non-empty");
    let before_left = ccw(market.positions[(first + n - 1) % n], market.positions[first]);
    let before_right = ccw(market.positions[last], market.positions[(last + 1) % n]);
    let after_left = ccw(post_pos[(ci + m - 1) % m], post_pos[ci]);
    let after_right = ccw(post_pos[ci], post_pos[(ci + 1) % m]);

    Ok(CoalitionReport {
        coalition_profit,
        standalone_profit_sum,
        profitable: coalition_profit > standalone_profit_sum,
        coalition_price: prices[ci],
        member_prices_before: coalition.members.iter().map(|&i| pre.prices[i]).collect(),
        coalition_share: shares[ci],
        rival_distances_after: (after_left, after_right),
        rival_distances_before: (before_left, before_right),
        diverted_mass,
        outside_share: 1.0 - shares[ci],
        prices_after: prices,
        shares_after: shares,
        coalition_index: ci,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diversion {
    pub diverted: bool,
    pub target_count: usize,
}

/// A consumer leaves the incumbent only when the merged entity's access
/// cost plus the switching charge is strictly lower.
pub fn consumer_diversion(
    merged_cost: f64,
    incumbent_cost: f64,
    switch_cost: f64,
    n_firms: usize,
    absorbed: usize,
) -> Result<Diversion> {
    if !(merged_cost >= 0.0 && incumbent_cost >= 0.0 && switch_cost >= 0.0) {
        return Err(Error::pre("consumer_diversion: costs must be >= 0"));
    }
    if absorbed > n_firms {
        return Err(Error::pre("consumer_diversion: cannot absorb more firms than exist"));
    }
    Ok(Diversion { diverted: merged_cost + switch_cost < incumbent_cost, target_count: n_firms - absorbed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(tau: f64) -> f64 {
        2.0 * tau / (GRID_POINTS - 1) as f64
    }

    #[test]
    fn symmetric_examples() {
        let eq = salop_equilibrium(&CircleMarket::equally_spaced(4, 1.0, 0.0, 0.0).unwrap()).unwrap();
        for (p, s) in eq.prices.iter().zip(&eq.shares) {
            assert!((p - 0.25).abs() <= step(1.0) + 1e-12);
            assert!((s - 0.25).abs() < 1e-9);
        }
        let eq = salop_equilibrium(&CircleMarket::equally_spaced(2, 2.0, 1.0, 0.0).unwrap()).unwrap();
        assert!(eq.prices.iter().all(|p| (p - 2.0).abs() <= step(2.0) + 1e-12));
    }

    #[test]
    fn doubling_tau_doubles_markup() {
        let a = salop_equilibrium(&CircleMarket::equally_spaced(5, 1.0, 0.3, 0.0).unwrap()).unwrap();
        let b = salop_equilibrium(&CircleMarket::equally_spaced(5, 2.0, 0.3, 0.0).unwrap()).unwrap();
        for (pa, pb) in a.prices.iter().zip(&b.prices) {
            assert!(((pb - 0.3) - 2.0 * (pa - 0.3)).abs() < 1e-9);
        }
    }

    #[test]
    fn coalition_geometry() {
        let m = CircleMarket::equally_spaced(8, 1.0, 0.0, 0.0).unwrap();
        let c = Coalition::new(&m, 0, 2).unwrap();
        assert!((c.position() - 0.0625).abs() < 1e-12);
        let wrap = Coalition::from_members(&m, &[7, 0]).unwrap();
        assert_eq!(wrap.members(), &[7, 0]);
        assert!((wrap.position() - 0.9375).abs() < 1e-12);
        assert!(Coalition::from_members(&m, &[0, 2]).is_err());
        assert!(Coalition::new(&m, 0, 8).is_err());
        assert!(Coalition::new(&m, 0, 1).is_err());
    }

    #[test]
    fn near_monopoly_merger_pays() {
        let m = CircleMarket::equally_spaced(5, 1.0, 0.0, 0.0).unwrap();
        let r = coalition_evaluate(&m, &Coalition::new(&m, 0, 4).unwrap()).unwrap();
        assert!(r.profitable);
        assert!(r.coalition_price >= r.member_prices_before[0]);
    }

    #[test]
    fn small_merger_conserves_mass() {
        let m = CircleMarket::equally_spaced(8, 0.2, 0.0, 0.0).unwrap();
        let r = coalition_evaluate(&m, &Coalition::new(&m, 2, 2).unwrap()).unwrap();
        assert!((r.shares_after.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((r.coalition_share + r.outside_share - 1.0).abs() < 1e-12);
        assert!((r.rival_distances_after.0 - 0.1875).abs() < 1e-12);
        assert!((r.rival_distances_before.0 - 0.125).abs() < 1e-12);
        assert!(r.member_prices_before.iter().all(|&p| r.coalition_price >= p - 1e-9));
    }

    #[test]
    fn diversion_examples() {
        assert_eq!(consumer_diversion(0.2, 0.3, 0.0, 6, 2).unwrap(), Diversion { diverted: true, target_count: 4 });
        assert!(!consumer_diversion(0.2, 0.3, 0.15, 6, 2).unwrap().diverted);
        assert!(!consumer_diversion(0.3, 0.3, 0.0, 6, 2).unwrap().diverted);
        assert!(consumer_diversion(-0.1, 0.3, 0.0, 6, 2).is_err());
    }

    #[test]
    fn market_validation() {
        assert!(CircleMarket::new(vec![0.5], 1.0, 0.0, 0.0).is_err());
        assert!(CircleMarket::new(vec![0.2, 0.2], 1.0, 0.0, 0.0).is_err());
        assert!(CircleMarket::new(vec![0.2, 1.0], 1.0, 0.0, 0.0).is_err());
        assert!(CircleMarket::new(vec![0.2, 0.4], 0.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symmetric_fixed_point(n in 2usize..=12, ti in 0usize..3) {
            let tau = [0.5, 1.0, 2.0][ti];
            let eq = salop_equilibrium(&CircleMarket::equally_spaced(n, tau, 0.1, 0.0).unwrap()).unwrap();
            for p in &eq.prices {
                prop_assert!((p - (0.1 + tau / n as f64)).abs() <= step(tau) + 1e-12);
            }
            prop_assert!((eq.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn jittered_layout_converges(n in 2usize..=8, jitter in proptest::collection::vec(-1.0..1.0f64, 8), tau in 0.3..2.0f64) {
            let pos: Vec<f64> = (0..n).map(|k| (k as f64 + 0.15 * jitter[k]) / n as f64).map(|x| x.rem_euclid(1.0)).collect();
            let mut pos = pos;
            pos.sort_by(f64::total_cmp);
            let eq = salop_equilibrium(&CircleMarket::new(pos, tau, 0.0, 0.0).unwrap()).unwrap();
            prop_assert!((eq.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn arbitrary_layout_is_equilibrium_or_reports(raw in proptest::collection::vec(0.0..1.0f64, 2..7), tau in 0.3..2.0f64) {
            let mut pos: Vec<f64> = raw.iter().map(|x| (x * 1000.0).floor() / 1000.0).collect();
            pos.sort_by(f64::total_cmp);
            pos.dedup();
            prop_assume!(pos.len() >= 2);
            let market = CircleMarket::new(pos.clone(), tau, 0.0, 0.0).unwrap();
            match salop_equilibrium(&market) {
                Ok(eq) => {
                    prop_assert!((eq.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    let layout = Layout { arcs: arc_lengths(&pos), tau, unit_cost: 0.0, locked: None };
                    let grid = layout.grid();
                    for i in 0..pos.len() {
                        let best = grid.iter().map(|&p| p * layout.share(i, p, &eq.prices)).fold(f64::NEG_INFINITY, f64::max);
                        prop_assert!(best <= eq.profits[i] + 1e-12);
                    }
                }
                Err(e) => prop_assert!(matches!(e, Error::NonConvergence { .. }), "unexpected {e:?}"),
            }
        }

        #[test]
        fn switching_cost_never_raises_diversion(n in 4usize..9, size in 2usize..4, t1 in 0.0..0.2f64, dt in 0.0..0.2f64) {
            prop_assume!(size < n);
            let eval = |t: f64| {
                let m = CircleMarket::equally_spaced(n, 1.0, 0.0, t).unwrap();
                coalition_evaluate(&m, &Coalition::new(&m, 0, size).unwrap()).unwrap()
            };
            let (lo, hi) = (eval(t1), eval(t1 + dt));
            prop_assert!(hi.diverted_mass <= lo.diverted_mass + 1e-9);
            prop_assert!((hi.shares_after.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(hi.member_prices_before.iter().all(|&p| hi.coalition_price >= p - 1e-9));
        }
    }
}
