//! Search values, Nash wage bargaining, staggered renegotiation and effort
//! punishment of wage deviations.

use crate::{Error, Result};

/// Value of a job paying `w` forever with survival hazard `r + b`.
pub fn employment_value(w: f64, r: f64, b: f64) -> Result<f64> {
    if !(r + b > 0.0) {
        return Err(Error::pre("employment_value: r + b must be > 0"));
    }
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::pre("employment_value: wage must be >= 0"));
    }
    Ok(w / (r + b))
}

/// Value of search: benefit flow plus job-finding at rate `f_rate` into a job
/// worth `v_e`.
pub fn unemployment_value(z_benefit: f64, f_rate: f64, v_e: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f_rate) {
        return Err(Error::pre("unemployment_value: job-finding rate must lie in [0, 1]"));
    }
    if !(r + f_rate > 0.0) {
        return Err(Error::pre("unemployment_value: r + f must be > 0"));
    }
    Ok((z_benefit + f_rate * v_e) / (r + f_rate))
}

/// Fallback values of worker and firm when bargaining fails.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisagreementPoint {
    pub z_e: f64,
    pub z_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BargainOutcome {
    Agreement { wage: f64, worker_value: f64, firm_value: f64 },
    Disagreement,
}

impl BargainOutcome {
    pub fn wage(&self) -> Option<f64> {
        match *self {
            BargainOutcome::Agreement { wage, .. } => Some(wage),
            BargainOutcome::Disagreement => None,
        }
    }
}

/// A strictly increasing wage grid of at least three points.
#[derive(Debug, Clone, PartialEq)]
pub struct WageGrid(Vec<f64>);

impl WageGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::pre("wage grid needs at least 3 points"));
        }
        if points.iter().any(|w| !w.is_finite()) || points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::pre("wage grid must be finite and strictly increasing"));
        }
        Ok(WageGrid(points))
    }

    /// `n` evenly spaced points on `[lo, hi]`, endpoints included.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::pre("linspace needs n >= 3 and hi > lo"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        pts[n - 1] = hi;
        WageGrid::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }
}

/// Maximises the asymmetric Nash product over the grid.
///
/// Only wages where both parties clear their disagreement values are
/// feasible. Ties go to the lowest wage.
pub fn nash_bargain<W, F>(
    worker_surplus: W,
    firm_surplus: F,
    d: DisagreementPoint,
    beta_power: f64,
    grid: &WageGrid,
) -> Result<BargainOutcome>
where
    W: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    if !(beta_power > 0.0 && beta_power < 1.0) {
        return Err(Error::pre("nash_bargain: bargaining power must lie in (0, 1)"));
    }
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &w in grid.points() {
        let vw = worker_surplus(w);
        let vf = firm_surplus(w);
        let (gw, gf) = (vw - d.z_e, vf - d.z_f);
        if !(gw >= 0.0 && gf >= 0.0) {
            continue;
        }
        let product = gw.powf(beta_power) * gf.powf(1.0 - beta_power);
        if best.is_none_or(|(p, ..)| product > p) {
            best = Some((product, w, vw, vf));
        }
    }
    Ok(match best {
        Some((_, wage, worker_value, firm_value)) => {
            BargainOutcome::Agreement { wage, worker_value, firm_value }
        }
        None => BargainOutcome::Disagreement,
    })
}

/// Aggregate wage after a fraction `lambda` of contracts moves to the target.
pub fn staggered_update(w_bar_prev: f64, w_target: f64, lambda: f64) -> f64 {
    lambda * w_target + (1.0 - lambda) * w_bar_prev
}

/// A firm's wage commitment to its workforce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WageContract {
    pub wage: f64,
    pub agreed_at: usize,
    pub promised_wage: f64,
    /// Applied to worker effort; 1 outside punishment.
    pub effort_multiplier: f64,
    /// Punishment periods still to serve after this one.
    pub punishment_left: u32,
}

impl WageContract {
    pub fn new(wage: f64, agreed_at: usize) -> Result<Self> {
        if !(wage.is_finite() && wage >= 0.0) {
            return Err(Error::invalid("contract.wage", "must be >= 0"));
        }
        Ok(WageContract { wage, agreed_at, promised_wage: wage, effort_multiplier: 1.0, punishment_left: 0 })
    }
}

/// One period of the effort-punishment rule: paying below the promise sets
/// effort to `rho` for the next `k` periods; a fresh deviation restarts the
/// window.
pub fn reversion_check(contract: &WageContract, paid: f64, rho: f64, k: u32) -> Result<WageContract> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::pre("reversion_check: rho must lie in (0, 1)"));
    }
    if k == 0 {
        return Err(Error::pre("reversion_check: k must be >= 1"));
    }
    let mut next = *contract;
    if paid < contract.promised_wage {
        next.effort_multiplier = rho;
        next.punishment_left = k;
    } else if contract.punishment_left > 1 {
        next.punishment_left -= 1;
        next.effort_multiplier = rho;
    } else {
        next.punishment_left = 0;
        next.effort_multiplier = 1.0;
    }
    Ok(next)
}

/// Whether the discounted payoff stream `sum delta^t x_t` reaches `threshold`.
pub fn npv_feasible(payoffs: &[f64], delta: f64, threshold: f64) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::pre("npv_feasible: delta must lie in (0, 1)"));
    }
    let mut weight = 1.0;
    let mut npv = 0.0;
    for &x in payoffs {
        npv += weight * x;
        weight *= delta;
    }
    Ok(npv >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn employment_value_examples() {
        assert!((employment_value(1.0, 0.05, 0.15).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(employment_value(0.0, 0.03, 0.1).unwrap(), 0.0);
        assert!(employment_value(1.0, 0.0, 0.0).is_err());
        let h = 1e-4;
        let fd = (employment_value(1.0 + h, 0.05, 0.15).unwrap()
            - employment_value(1.0 - h, 0.05, 0.15).unwrap())
            / (2.0 * h);
        assert!((fd - 1.0 / 0.2).abs() < 1e-6);
    }

    #[test]
    fn unemployment_value_examples() {
        assert_eq!(unemployment_value(0.0, 0.0, 5.0, 0.05).unwrap(), 0.0);
        let v = unemployment_value(0.2, 0.3, 5.0, 0.05).unwrap();
        assert!((v - 1.7 / 0.35).abs() < 1e-12);
        assert!(unemployment_value(0.2, 0.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn unemployment_below_employment_iff_benefit_below_interest_flow() {
        // V_U <= V_E  <=>  z + f V_E <= (r + f) V_E  <=>  z <= r V_E
        for &r in &[0.01, 0.05, 0.2] {
            for &b in &[0.02, 0.15] {
                for &w in &[0.5, 1.0, 2.0] {
                    let ve = employment_value(w, r, b).unwrap();
                    for &f in &[0.0, 0.3, 1.0] {
                        for &z in &[0.0, 0.01, 0.1, 0.5, 1.0] {
                            let vu = unemployment_value(z, f, ve, r).unwrap();
                            assert_eq!(vu <= ve + 1e-12, z <= r * ve + 1e-12, "r={r} b={b} w={w} f={f} z={z}");
                        }
                    }
                }
            }
        }
    }

    fn unit_grid() -> WageGrid {
        WageGrid::linspace(0.0, 1.0, 1001).unwrap()
    }

    #[test]
    fn symmetric_split() {
        let out = nash_bargain(|w| w, |w| 1.0 - w, DisagreementPoint::default(), 0.5, &unit_grid()).unwrap();
        assert!((out.wage().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strong_worker_gets_more() {
        let out = nash_bargain(|w| w, |w| 1.0 - w, DisagreementPoint::default(), 0.9, &unit_grid()).unwrap();
        assert!((out.wage().unwrap() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn no_feasible_wage() {
        let out = nash_bargain(|w| w, |w| -1.0 - w, DisagreementPoint::default(), 0.5, &unit_grid()).unwrap();
        assert_eq!(out, BargainOutcome::Disagreement);
    }

    #[test]
    fn ties_go_to_lowest_wage() {
        // flat product: both parties indifferent across the grid
        let out = nash_bargain(|_| 1.0, |_| 1.0, DisagreementPoint::default(), 0.5, &unit_grid()).unwrap();
        assert_eq!(out.wage(), Some(0.0));
    }

    #[test]
    fn malformed_grids() {
        assert!(WageGrid::new(vec![0.0, 1.0]).is_err());
        assert!(WageGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(WageGrid::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(WageGrid::linspace(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn stagger_examples() {
        assert_eq!(staggered_update(1.0, 0.8, 1.0), 0.8);
        assert_eq!(staggered_update(1.0, 0.8, 0.0), 1.0);
        assert!((staggered_update(1.0, 0.8, 0.25) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn stagger_gap_decays_geometrically() {
        let (lambda, target) = (0.3, 0.6);
        let mut w = 1.0;
        for t in 1..=40 {
            w = staggered_update(w, target, lambda);
            let expect = (1.0f64 - lambda).powi(t) * 0.4;
            assert!(((w - target).abs() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn punishment_trace() {
        let c = WageContract::new(1.0, 0).unwrap();
        let kept = reversion_check(&c, 1.0, 0.7, 2).unwrap();
        assert_eq!(kept.effort_multiplier, 1.0);

        let p1 = reversion_check(&c, 0.9, 0.7, 2).unwrap();
        assert_eq!(p1.effort_multiplier, 0.7);
        let p2 = reversion_check(&p1, 1.0, 0.7, 2).unwrap();
        assert_eq!(p2.effort_multiplier, 0.7);
        let p3 = reversion_check(&p2, 1.0, 0.7, 2).unwrap();
        assert_eq!(p3.effort_multiplier, 1.0);

        // second deviation inside the window restarts it
        let again = reversion_check(&p1, 0.9, 0.7, 2).unwrap();
        assert_eq!((again.effort_multiplier, again.punishment_left), (0.7, 2));
        assert!(reversion_check(&c, 0.9, 1.0, 2).is_err());
        assert!(reversion_check(&c, 0.9, 0.5, 0).is_err());
    }

    #[test]
    fn npv_examples() {
        let ones = vec![1.0; 100];
        assert!(npv_feasible(&ones, 0.5, 1.9).unwrap());
        assert!(!npv_feasible(&ones, 0.5, 2.0 + 1e-9).unwrap());
        assert!(npv_feasible(&[0.0; 10], 0.9, 0.0).unwrap());
        let p = [1.0, -2.0, 3.0];
        let bound: f64 = p.iter().map(|x: &f64| x.abs()).sum();
        assert!(!npv_feasible(&p, 0.9, bound + 1.0).unwrap());
        assert!(npv_feasible(&p, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn rescaling_keeps_argmax(cw in 0.01..100.0f64, cf in 0.01..100.0f64,
                                  beta in 0.05..0.95f64, x in 0.5..3.0f64) {
            let grid = WageGrid::linspace(0.0, x, 301).unwrap();
            let d = DisagreementPoint::default();
            let base = nash_bargain(|w| w.sqrt(), |w| x - w, d, beta, &grid).unwrap();
            let scaled = nash_bargain(|w| cw * w.sqrt(), |w| cf * (x - w), d, beta, &grid).unwrap();
            prop_assert_eq!(base.wage(), scaled.wage());
        }

        #[test]
        fn refinement_moves_at_most_one_step(beta in 0.05..0.95f64, ze in 0.0..0.3f64) {
            let d = DisagreementPoint { z_e: ze, z_f: 0.0 };
            let coarse = WageGrid::linspace(0.0, 1.0, 101).unwrap();
            let fine = WageGrid::linspace(0.0, 1.0, 201).unwrap();
            let a = nash_bargain(|w| w, |w| 1.0 - w, d, beta, &coarse).unwrap().wage().unwrap();
            let b = nash_bargain(|w| w, |w| 1.0 - w, d, beta, &fine).unwrap().wage().unwrap();
            prop_assert!((a - b).abs() <= 0.01 + 1e-12);
        }

        #[test]
        fn agreements_respect_participation(ze in -0.5..0.8f64, zf in -0.5..0.8f64, beta in 0.05..0.95f64) {
            let d = DisagreementPoint { z_e: ze, z_f: zf };
            match nash_bargain(|w| w, |w| 1.0 - w, d, beta, &unit_grid()).unwrap() {
                BargainOutcome::Agreement { worker_value, firm_value, .. } => {
                    prop_assert!(worker_value >= ze && firm_value >= zf);
                }
                BargainOutcome::Disagreement => prop_assert!(ze + zf > 1.0 - 1e-3),
            }
        }
    }
}
