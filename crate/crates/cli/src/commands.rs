use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::Serialize;
use serde_json::json;
use wncs_core::config::Config;
use wncs_core::io::{write_csv, Cell};
use wncs_core::model::ProtocolKind;
use wncs_core::pipeline::{
    omega_star, power_lp, rate_report, region, sim_setup, two_link,
};
use wncs_core::protocols::{expected_cover_time, CoverStats};
use wncs_core::sim::{empirical_protocol_stats, monte_carlo_decay, simulate, SimConfig};
use wncs_core::stability::CurvePoint;
use wncs_core::validate::{run_all, simulator_invariants, REFERENCE_RATES};
use wncs_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::{Command, CoverArgs, PowerArgs, PowerMode, RateArgs, SimulateArgs, ValidateArgs};

/// Files written by a command and its exit code.
struct Outcome {
    files: Vec<String>,
    code: u8,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Out<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn csv<I: IntoIterator<Item = Vec<Cell>>>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()> {
        write_csv(&self.dir.join(name), header, rows)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn done(self, code: u8) -> Outcome {
        Outcome { files: self.files, code }
    }
}

pub fn dispatch(command: &Command) -> Result<u8> {
    match command {
        Command::Replay(args) => {
            let m = RunManifest::read(&args.manifest)?;
            let cmd = with_out(&m.command, &args.out)?;
            run_recorded(&cmd, m.config)
        }
        Command::Validate(args) => {
            let cfg = match &args.config {
                Some(p) => Some(Config::from_path(p)?),
                None => None,
            };
            run_recorded(command, cfg)
        }
        Command::Rate(RateArgs { io, .. })
        | Command::Power(PowerArgs { io, .. })
        | Command::Simulate(SimulateArgs { io, .. })
        | Command::Cover(CoverArgs { io, .. }) => {
            let cfg = Config::from_path(&io.config)?;
            run_recorded(command, Some(cfg))
        }
    }
}

fn with_out(command: &Command, out: &Path) -> Result<Command> {
    let mut cmd = command.clone();
    match &mut cmd {
        Command::Rate(a) => a.io.out = out.to_owned(),
        Command::Power(a) => a.io.out = out.to_owned(),
        Command::Simulate(a) => a.io.out = out.to_owned(),
        Command::Cover(a) => a.io.out = out.to_owned(),
        Command::Validate(a) => a.out = Some(out.to_owned()),
        Command::Replay(_) => return Err(Error::Config("a manifest cannot record a replay".into())),
    }
    Ok(cmd)
}

fn out_dir(command: &Command) -> Option<PathBuf> {
    match command {
        Command::Rate(a) => Some(a.io.out.clone()),
        Command::Power(a) => Some(a.io.out.clone()),
        Command::Simulate(a) => Some(a.io.out.clone()),
        Command::Cover(a) => Some(a.io.out.clone()),
        Command::Validate(a) => a.out.clone(),
        Command::Replay(_) => None,
    }
}

fn seed_of(command: &Command) -> Option<u64> {
    match command {
        Command::Simulate(a) => Some(a.seed),
        Command::Cover(a) => Some(a.seed),
        Command::Validate(a) => Some(a.seed),
        _ => None,
    }
}

fn run_recorded(command: &Command, cfg: Option<Config>) -> Result<u8> {
    let started = Utc::now().to_rfc3339();
    let dir = out_dir(command);
    let outcome = match (command, &cfg, &dir) {
        (Command::Rate(a), Some(cfg), Some(dir)) => cmd_rate(a, cfg, dir)?,
        (Command::Power(a), Some(cfg), Some(dir)) => cmd_power(a, cfg, dir)?,
        (Command::Simulate(a), Some(cfg), Some(dir)) => cmd_simulate(a, cfg, dir)?,
        (Command::Cover(a), Some(cfg), Some(dir)) => cmd_cover(a, cfg, dir)?,
        (Command::Validate(a), cfg, dir) => cmd_validate(a, cfg.as_ref(), dir.as_deref())?,
        _ => return Err(Error::Config("manifest lacks the configuration this command needs".into())),
    };
    if let Some(dir) = dir {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.clone(),
            seed: seed_of(command),
            config: cfg,
            started,
            finished: Utc::now().to_rfc3339(),
            outputs: outcome.files,
        }
        .write(&dir)?;
    }
    Ok(outcome.code)
}

fn curve_rows(curve: &[CurvePoint]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    curve
        .iter()
        .map(|p| vec![p.omega.into(), p.lhs.into(), p.rho.into()])
}

fn cmd_rate(args: &RateArgs, cfg: &Config, dir: &Path) -> Result<Outcome> {
    let tol = args.tol.unwrap_or_else(|| cfg.gain_tol());
    let report = rate_report(cfg, tol)?;
    let computed = [
        report.stochastic.omega_star,
        report.deterministic.omega_star,
        report.stochastic.tabbara_omega,
        report.deterministic.tabbara_omega,
    ];
    let references: Vec<_> = REFERENCE_RATES
        .iter()
        .zip(computed)
        .map(|((label, value), c)| json!({"case": label, "reference": value, "computed": c, "ratio": c / value}))
        .collect();
    let mut out = Out::new(dir)?;
    out.json(
        "rate.json",
        &json!({
            "protocol": cfg.protocol(),
            "omega_star": omega_star(&report, cfg.protocol()),
            "report": report,
            "reference_rates": references,
        }),
    )?;
    let header = ["omega", "lhs", "rho"];
    out.csv("lhs_stochastic.csv", &header, curve_rows(&report.stochastic.lhs_curve))?;
    out.csv("lhs_deterministic.csv", &header, curve_rows(&report.deterministic.lhs_curve))?;
    println!(
        "omega* stochastic {:.6} (min-probability bound {:.6}, ratio {:.4})",
        report.stochastic.omega_star, report.stochastic.tabbara_omega, report.stochastic.tabbara_ratio
    );
    println!(
        "omega* round robin {:.6} (min-probability bound {:.6}, ratio {:.4})",
        report.deterministic.omega_star, report.deterministic.tabbara_omega, report.deterministic.tabbara_ratio
    );
    Ok(out.done(0))
}

fn cmd_power(args: &PowerArgs, cfg: &Config, dir: &Path) -> Result<Outcome> {
    let tol = args.tol.unwrap_or_else(|| cfg.gain_tol());
    let mut out = Out::new(dir)?;
    match args.mode {
        PowerMode::Lp => {
            let (constant, sols) = power_lp(cfg, args.grid, args.delta, tol)?;
            for (i, s) in sols.iter().enumerate() {
                println!("node {}: powers {:?}, total {:.6}", i + 1, s.powers, s.objective);
            }
            out.json("power.json", &json!({"constant": constant, "solutions": sols}))?;
        }
        PowerMode::TwoLink => {
            let (constant, report) = two_link(cfg, args.delta, tol)?;
            if let (Some(eps), Some(p)) = (report.eps_star, report.powers) {
                println!("eps* {eps:.6}, powers ({:.6}, {:.6})", p.0, p.1);
            }
            out.json("power.json", &json!({"constant": constant, "two_link": report}))?;
        }
        PowerMode::Region => {
            let reg = region(cfg, args.grid, args.delta, tol)?;
            let (constant, report) = two_link(cfg, args.delta, tol)?;
            let optimum_on_boundary = report.powers.map(|(p1, p2)| reg.cell_straddles(p1, p2));
            let rows = reg.p1.iter().enumerate().flat_map(|(i, &x)| {
                let reg = &reg;
                reg.p2
                    .iter()
                    .enumerate()
                    .map(move |(j, &y)| vec![x.into(), y.into(), reg.feasible[i][j].into()])
            });
            out.csv("region.csv", &["p1", "p2", "feasible"], rows)?;
            out.csv(
                "boundary.csv",
                &["p1", "p2"],
                reg.boundary.iter().map(|&(x, y)| vec![x.into(), y.into()]),
            )?;
            out.json(
                "power.json",
                &json!({
                    "constant": constant,
                    "two_link": report,
                    "optimum_cell_straddles_boundary": optimum_on_boundary,
                    "grid": reg.p1.len(),
                }),
            )?;
        }
    }
    Ok(out.done(0))
}

fn cmd_simulate(args: &SimulateArgs, cfg: &Config, dir: &Path) -> Result<Outcome> {
    let tol = args.tol.unwrap_or_else(|| cfg.gain_tol());
    let mut setup = sim_setup(cfg, tol)?;
    if let Some(g) = args.grid {
        setup.sim.grid_points = g;
    }
    let trials = args.trials.unwrap_or(setup.trials);
    let est = monte_carlo_decay(&setup.dynamics, &setup.topology, &setup.sim, &setup.x0, &setup.e0, trials, args.seed)?;

    let sample = SimConfig {
        record_jumps: true,
        ..setup.sim.clone()
    };
    let tr = simulate(&setup.dynamics, &setup.topology, &sample, &setup.x0, &setup.e0, args.seed, 0)?;

    let mut out = Out::new(dir)?;
    out.csv(
        "decay.csv",
        &["t", "mean_norm", "q90", "q99"],
        (0..est.times.len()).map(|j| {
            vec![est.times[j].into(), est.mean_norm[j].into(), est.q90[j].into(), est.q99[j].into()]
        }),
    )?;
    let nx = setup.wncs.n_x();
    let mut header = vec!["t".to_owned()];
    header.extend((1..=nx).map(|i| format!("x{i}")));
    header.extend((1..=setup.wncs.n_e()).map(|i| format!("e{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "trajectory.csv",
        &header,
        tr.times.iter().zip(&tr.states).map(|(&t, s)| {
            std::iter::once(Cell::F(t)).chain(s.iter().map(|&v| Cell::F(v))).collect()
        }),
    )?;
    out.csv(
        "jumps.csv",
        &["t", "k", "node", "link_success"],
        tr.jumps.iter().map(|j| {
            let mask: String = j.link_success.iter().map(|&b| if b { '1' } else { '0' }).collect();
            vec![j.t.into(), j.k.into(), (j.node + 1).into(), Cell::S(mask)]
        }),
    )?;
    out.json(
        "simulate.json",
        &json!({
            "rate": setup.sim.transmission.rate(),
            "dt": setup.sim.dt,
            "horizon": setup.sim.horizon,
            "protocol": setup.sim.protocol,
            "node_probabilities": setup.topology.cumulative_successes(),
            "trials": est.trials,
            "divergent": est.divergent,
            "c": est.c,
            "c_ci": est.c_ci,
            "k": est.k,
            "fit_rms_residual": est.fit_rms_residual,
            "initial_norm": est.initial_norm,
            "final_ratio": est.final_ratio,
        }),
    )?;
    println!(
        "rate {:.6}: decay c = {:.6} (95% CI {:.6}, {:.6}), final/initial {:.4}, divergent {}/{}",
        setup.sim.transmission.rate(),
        est.c,
        est.c_ci.0,
        est.c_ci.1,
        est.final_ratio,
        est.divergent,
        est.trials
    );
    Ok(out.done(0))
}

fn cmd_cover(args: &CoverArgs, cfg: &Config, dir: &Path) -> Result<Outcome> {
    let topo = cfg.topology()?;
    let f = topo.cumulative_successes();
    let stats = empirical_protocol_stats(&topo, cfg.protocol(), args.trials, 0, args.seed)?;
    let formula = expected_cover_time(&f)?;
    let pgf = CoverStats::new(&f)?;
    let checks: Vec<_> = [0.5, 0.9, 1.0]
        .iter()
        .map(|&s| {
            let (m, se) = stats.pgf_estimate(s);
            json!({"s": s, "formula": pgf.pgf(s).ok(), "empirical": m, "standard_error": se})
        })
        .collect();
    let mut out = Out::new(dir)?;
    out.csv(
        "cover_histogram.csv",
        &["cover_time", "count"],
        stats.histogram().into_iter().map(|(t, n)| vec![t.into(), n.into()]),
    )?;
    out.json(
        "cover.json",
        &json!({
            "protocol": cfg.protocol(),
            "node_probabilities": f,
            "formula_mean": formula,
            "empirical_mean": stats.cover_mean(),
            "standard_error": stats.cover_standard_error(),
            "samples": stats.cover_times.len(),
            "jumps": stats.jumps,
            "grant_freq": stats.grant_freq,
            "success_freq": stats.success_freq,
            "pgf": checks,
            "formula_assumes": if cfg.protocol() == ProtocolKind::StochasticUniform {
                "stochastic scheduling"
            } else {
                "stochastic scheduling; the configured protocol is round robin"
            },
        }),
    )?;
    println!(
        "cover time: formula {formula:.6}, empirical {:.6} +- {:.6}",
        stats.cover_mean(),
        stats.cover_standard_error()
    );
    Ok(out.done(0))
}

fn cmd_validate(args: &ValidateArgs, cfg: Option<&Config>, dir: Option<&Path>) -> Result<Outcome> {
    let outcomes = run_all();
    let mut ok = true;
    for o in &outcomes {
        println!("{}", o.line());
        ok &= o.passed;
    }
    let extra = cfg.map(|c| simulator_invariants(c, args.seed).unwrap_or_else(|e| (false, format!("error: {e}"))));
    if let Some((pass, detail)) = &extra {
        println!("[{}] simulator invariants on --config: {detail}", if *pass { "PASS" } else { "FAIL" });
        ok &= pass;
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    let files = match dir {
        Some(dir) => {
            let mut out = Out::new(dir)?;
            out.json(
                "validate.json",
                &json!({
                    "criteria": outcomes,
                    "config_invariants": extra.map(|(p, d)| json!({"passed": p, "detail": d})),
                }),
            )?;
            out.files
        }
        None => Vec::new(),
    };
    Ok(Outcome {
        files,
        code: if ok { 0 } else { 1 },
    })
}
