//! Command-line front end: scenario runs, parameter sweeps and the pricing
//! and spatial labs. All file output goes through here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::pricing::{self, Entrant};
use crate::scenario::Scenario;
use crate::sim::{self, TimeSeries};
use crate::spatial;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "nashrev", version, about = "Search-and-bargaining labour market and repeated pricing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write its time series.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        periods: Option<u64>,
    },
    /// Run one scenario per value of a parameter.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Dotted path such as `mobility.band_floor` or `shocks[0].magnitude`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated pricing game, discount thresholds and limit pricing.
    PricingLab {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Circle-market equilibrium and coalition evaluation.
    SpatialLab {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    PricingLab,
    SpatialLab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub periods: Option<usize>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { scenario, out, seed, periods } => {
            let periods = periods.map(|p| p as usize);
            run_command(&RunConfig { scenario, out, seed, periods, mode: Mode::Run })
        }
        Command::Sweep { scenario, param, values, out } => {
            let cfg = RunConfig { scenario, out, seed: None, periods: None, mode: Mode::Run };
            sweep_command(&cfg, &SweepSpec { param, values })
        }
        Command::PricingLab { scenario, out } => {
            run_command(&RunConfig { scenario, out, seed: None, periods: None, mode: Mode::PricingLab })
        }
        Command::SpatialLab { scenario, out } => {
            run_command(&RunConfig { scenario, out, seed: None, periods: None, mode: Mode::SpatialLab })
        }
    }
}

fn load(cfg: &RunConfig) -> Result<Scenario> {
    if cfg.scenario.as_os_str().is_empty() || cfg.out.as_os_str().is_empty() {
        return Err(Error::Config { path: "<args>".into(), message: "paths must be non-empty".into() });
    }
    let mut scenario = Scenario::load(&cfg.scenario)?;
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    if let Some(p) = cfg.periods {
        scenario.periods = p;
        let origin = cfg.scenario.display().to_string();
        scenario.validate().map_err(|e| Error::Config { path: origin, message: format!("with --periods {p}: {e}") })?;
    }
    Ok(scenario)
}

pub fn run_command(cfg: &RunConfig) -> Result<()> {
    let scenario = load(cfg)?;
    create_dir(&cfg.out)?;
    match cfg.mode {
        Mode::Run => {
            let series = sim::run(&scenario)?;
            write_run_outputs(&cfg.out, &scenario, &series)
        }
        Mode::PricingLab => pricing_lab(&cfg.out, &scenario),
        Mode::SpatialLab => spatial_lab(&cfg.out, &scenario),
    }
}

pub fn sweep_command(cfg: &RunConfig, spec: &SweepSpec) -> Result<()> {
    if spec.values.len() < 2 {
        return Err(Error::Config { path: spec.param.clone(), message: "a sweep needs at least 2 values".into() });
    }
    let base = load(cfg)?;
    // resolve every value before running anything
    let scenarios = spec
        .values
        .iter()
        .map(|v| base.with_override(&spec.param, v))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&cfg.out)?;
    let results: Vec<Result<SweepRow>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let dir = cfg.out.join(format!("{i:02}_{}", sanitize(&spec.values[i])));
            create_dir(&dir)?;
            let series = sim::run(s)?;
            write_run_outputs(&dir, s, &series)?;
            sweep_row(s, &series)
        })
        .collect();

    let mut csv = String::new();
    csv.push_str("# sweep of ");
    csv.push_str(&spec.param);
    csv.push_str(": steady state after the last shock; delta_star is the grim threshold of the pricing game\n");
    csv.push_str("value,status,wage,employed,output,u_rate,v_rate,knowledge,admissions_total,delta_star\n");
    let mut failed = None;
    for (value, res) in spec.values.iter().zip(&results) {
        match res {
            Ok(r) => {
                let _ = writeln!(
                    csv,
                    "{value},ok,{},{},{},{},{},{},{},{}",
                    opt(r.wage),
                    opt(r.employed),
                    opt(r.output),
                    opt(r.u_rate),
                    opt(r.v_rate),
                    fmt_num(r.knowledge),
                    r.admissions_total,
                    opt(r.delta_star)
                );
            }
            Err(e) => {
                let _ = writeln!(csv, "{value},\"error: {}\",,,,,,,,", e.to_string().replace('"', "'"));
                failed.get_or_insert_with(|| e.to_string());
            }
        }
    }
    write_atomic(&cfg.out.join("sweep_summary.csv"), &csv)?;
    match failed {
        Some(msg) => Err(Error::pre(format!("sweep finished with failures; first: {msg}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub wage: Option<f64>,
    pub employed: Option<f64>,
    pub output: Option<f64>,
    pub u_rate: Option<f64>,
    pub v_rate: Option<f64>,
    pub knowledge: f64,
    pub admissions_total: u64,
    pub delta_star: Option<f64>,
}

fn sweep_row(s: &Scenario, series: &TimeSeries) -> Result<SweepRow> {
    let ss = post_shock_steady(series)?;
    let last = series.rows.last().expect("at least one period");
    let delta_star = match &s.pricing {
        Some(p) => {
            let d = pricing::critical_discount_grim(&p.game()?)?;
            Some(d.delta)
        }
        None => None,
    };
    Ok(SweepRow {
        wage: ss.as_ref().map(|x| x.wage),
        employed: ss.as_ref().map(|x| x.employed),
        output: ss.as_ref().map(|x| x.output),
        u_rate: ss.as_ref().map(|_| last.u_rate),
        v_rate: ss.as_ref().map(|_| last.v_rate),
        knowledge: last.knowledge,
        admissions_total: series.rows.iter().map(|r| r.admissions).sum(),
        delta_star,
    })
}

fn post_shock_steady(series: &TimeSeries) -> Result<Option<sim::SteadyState>> {
    let from = series.settle_from.min(series.len().saturating_sub(series.steady_window));
    if series.len() < series.steady_window {
        return Ok(None);
    }
    sim::detect_steady_state_in(series, from, series.len(), series.steady_window, series.steady_tol)
}

fn pre_shock_steady(s: &Scenario, series: &TimeSeries) -> Result<Option<sim::SteadyState>> {
    let Some(start) = s.shocks.iter().map(|x| x.start).min() else {
        return Ok(None);
    };
    if start < series.steady_window {
        return Ok(None);
    }
    sim::detect_steady_state_in(series, 0, start, series.steady_window, series.steady_tol)
}

const SERIES_HEADER: &str = "t,output,knowledge,capital,labor,wage,price,employed,unemployed,vacancies,hiring_rate_mean,u_rate,v_rate,game_price,admissions,structural_unemployed,households";

pub fn series_csv(series: &TimeSeries) -> String {
    let mut out = String::with_capacity(series.len() * 160);
    out.push_str("# output/knowledge/labor: production at period start; employed..v_rate: after hiring; game_price: lowest posted price (empty without a pricing game)\n");
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for r in &series.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            fmt_num(r.output),
            fmt_num(r.knowledge),
            fmt_num(r.capital),
            fmt_num(r.labor),
            fmt_num(r.wage),
            fmt_num(r.price),
            r.employed,
            r.unemployed,
            r.vacancies,
            fmt_num(r.hiring_rate_mean),
            fmt_num(r.u_rate),
            fmt_num(r.v_rate),
            opt(r.game_price),
            r.admissions,
            r.structural_unemployed,
            r.households
        );
    }
    out
}

fn beveridge_csv(series: &TimeSeries) -> Result<String> {
    let mut out = String::from("# one point per period: unemployed / households, openings / households\nt,u_rate,v_rate\n");
    for (r, (u, v)) in series.rows.iter().zip(sim::beveridge_points(series)?) {
        let _ = writeln!(out, "{},{},{}", r.t, fmt_num(u), fmt_num(v));
    }
    Ok(out)
}

fn steady_text(label: &str, ss: &Option<sim::SteadyState>) -> String {
    match ss {
        Some(s) => format!(
            "{label}: from period {} (window {}, tol {}): wage {} employed {} output {}\n",
            s.period,
            s.window,
            fmt_num(s.tol),
            fmt_num(s.wage),
            fmt_num(s.employed),
            fmt_num(s.output)
        ),
        None => format!("{label}: none\n"),
    }
}

fn write_run_outputs(dir: &Path, s: &Scenario, series: &TimeSeries) -> Result<()> {
    let pre = pre_shock_steady(s, series)?;
    let post = post_shock_steady(series)?;
    let mut steady = String::new();
    steady.push_str(&steady_text("pre-shock", &pre));
    steady.push_str(&steady_text("post-shock", &post));

    let last = series.rows.last().expect("at least one period");
    let mut summary = String::new();
    let _ = writeln!(summary, "periods: {}", series.len());
    let _ = writeln!(summary, "households: {}", last.households);
    let _ = writeln!(summary, "firms: {}", s.labor.firms);
    let _ = writeln!(summary, "shocks: {}", s.shocks.len());
    for sh in &s.shocks {
        let _ = writeln!(summary, "  magnitude {} from {} for {} periods", fmt_num(sh.magnitude), sh.start, sh.duration);
    }
    let _ = writeln!(summary, "final wage: {}", fmt_num(last.wage));
    let _ = writeln!(summary, "final employed: {} unemployed: {}", last.employed, last.unemployed);
    let _ = writeln!(summary, "final output: {}", fmt_num(last.output));
    let min_h = series.rows.iter().map(|r| r.hiring_rate_mean).fold(f64::INFINITY, f64::min);
    let _ = writeln!(summary, "lowest mean hiring rate: {}", fmt_num(min_h));
    let _ = writeln!(summary, "entrants admitted: {}", series.rows.iter().map(|r| r.admissions).sum::<u64>());
    let _ = writeln!(summary, "structurally unemployed at end: {}", last.structural_unemployed);
    if let Some(start) = s.shocks.iter().map(|x| x.start).min() {
        match sim::wage_gap_half_life(series, start)? {
            Some(h) => {
                let _ = writeln!(summary, "wage gap half-life: {h} periods");
            }
            None => summary.push_str("wage gap half-life: not reached\n"),
        }
    }
    summary.push_str(&steady);

    write_atomic(&dir.join("series.csv"), &series_csv(series))?;
    write_atomic(&dir.join("beveridge.csv"), &beveridge_csv(series)?)?;
    write_atomic(&dir.join("steady_state.txt"), &steady)?;
    write_atomic(&dir.join("summary.txt"), &summary)
}

fn pricing_lab(dir: &Path, s: &Scenario) -> Result<()> {
    let cfg = s.pricing.clone().ok_or_else(|| Error::Config {
        path: "pricing".into(),
        message: "pricing-lab needs a [pricing] section".into(),
    })?;
    let game = cfg.game()?;
    let mut machines = cfg.machines()?;
    let record = pricing::play_repeated(&game, &mut machines, cfg.lab_periods, cfg.delta, s.seed)?;
    let grim = pricing::critical_discount_grim(&game)?;
    let abreu = pricing::abreu_critical(&game, cfg.stick_price(), cfg.k_stick)?;
    let plan = pricing::three_period_schedule(&game, &Entrant::new(cfg.entrant_cost, cfg.entry_fee)?)?;

    let mut csv = String::from("# per period: posted prices, public signal, stage profits\nt");
    for i in 0..game.n_firms {
        let _ = write!(csv, ",price_{i}");
    }
    csv.push_str(",signal");
    for i in 0..game.n_firms {
        let _ = write!(csv, ",profit_{i}");
    }
    csv.push('\n');
    for t in 0..record.prices.len() {
        csv.push_str(&t.to_string());
        for p in &record.prices[t] {
            let _ = write!(csv, ",{}", fmt_num(*p));
        }
        let _ = write!(csv, ",{}", fmt_num(record.signals[t]));
        for p in &record.payoffs[t] {
            let _ = write!(csv, ",{}", fmt_num(*p));
        }
        csv.push('\n');
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "firms: {}", game.n_firms);
    let _ = writeln!(summary, "monopoly price: {}", fmt_num(game.monopoly_price()));
    let _ = writeln!(summary, "grim delta_star: {}{}", fmt_num(grim.delta), if grim.degenerate { " (degenerate)" } else { "" });
    let _ = writeln!(
        summary,
        "abreu delta_star: {} (stick {}, {} periods{}{})",
        fmt_num(abreu.delta),
        fmt_num(cfg.stick_price()),
        cfg.k_stick,
        if abreu.too_weak { ", punishment too weak" } else { "" },
        if abreu.stick_credible { "" } else { ", stick not credible" }
    );
    let _ = writeln!(
        summary,
        "limit schedule: {} {} {}{}",
        fmt_num(plan.first),
        fmt_num(plan.second),
        fmt_num(plan.third),
        if plan.undeterrable { " (undeterrable)" } else { "" }
    );
    let _ = writeln!(summary, "schedule profits: {} {} {}", fmt_num(plan.profits[0]), fmt_num(plan.profits[1]), fmt_num(plan.profits[2]));
    summary.push_str("discounted payoffs:");
    for v in &record.discounted {
        let _ = write!(summary, " {}", fmt_num(*v));
    }
    summary.push('\n');

    write_atomic(&dir.join("pricing.csv"), &csv)?;
    write_atomic(&dir.join("summary.txt"), &summary)
}

fn spatial_lab(dir: &Path, s: &Scenario) -> Result<()> {
    let cfg = s.spatial.clone().ok_or_else(|| Error::Config {
        path: "spatial".into(),
        message: "spatial-lab needs a [spatial] section".into(),
    })?;
    let market = cfg.market()?;
    let eq = spatial::salop_equilibrium(&market)?;
    let coalition = cfg.coalition(&market)?;
    let report = spatial::coalition_evaluate(&market, &coalition)?;

    let mut csv = String::from("# pre-merger equilibrium per firm\nfirm,position,price,share,profit,member\n");
    for i in 0..market.n_firms() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{}",
            fmt_num(market.positions()[i]),
            fmt_num(eq.prices[i]),
            fmt_num(eq.shares[i]),
            fmt_num(eq.profits[i]),
            coalition.members().contains(&i)
        );
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "firms: {} tau: {} switch cost: {}", market.n_firms(), fmt_num(market.tau), fmt_num(market.switch_cost));
    let _ = writeln!(summary, "coalition: {:?} at {}", coalition.members(), fmt_num(coalition.position()));
    let _ = writeln!(summary, "coalition price: {} share: {}", fmt_num(report.coalition_price), fmt_num(report.coalition_share));
    let _ = writeln!(summary, "coalition profit: {} standalone sum: {}", fmt_num(report.coalition_profit), fmt_num(report.standalone_profit_sum));
    let _ = writeln!(summary, "profitable: {}", report.profitable);
    let _ = writeln!(
        summary,
        "rival distances before: {} {} after: {} {}",
        fmt_num(report.rival_distances_before.0),
        fmt_num(report.rival_distances_before.1),
        fmt_num(report.rival_distances_after.0),
        fmt_num(report.rival_distances_after.1)
    );
    let _ = writeln!(summary, "diverted mass: {}", fmt_num(report.diverted_mass));
    let _ = writeln!(summary, "outside share: {}", fmt_num(report.outside_share));

    write_atomic(&dir.join("spatial.csv"), &csv)?;
    write_atomic(&dir.join("summary.txt"), &summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Nine significant digits in the shortest of fixed or exponent notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |e| Error::Io { path: path.display().to_string(), source: e };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_num(123456789.4), "123456789");
        assert_eq!(fmt_num(1.5e12), "1.5e+12");
        assert_eq!(fmt_num(9.9999999999), "10");
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize("-0.05"), "-0.05");
        assert_eq!(sanitize("a b/c"), "a_b_c");
    }
}
