//! The five subcommands. Each writes its artifacts, `report.json` and
//! `manifest.json` into the output directory and returns the report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rand::Rng;
use rayon::prelude::*;
use roughflow_core::manifold::{invariance_defect, ManifoldContext, ManifoldGraph};
use roughflow_core::math;
use roughflow_core::rough_driver::{RoughPath, DEFAULT_CHEN_TOL, FULL_CHEN_AUDIT_MAX_POINTS};
use roughflow_core::solver::solve_global_partial;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::formats;
use crate::report::{Check, Criterion, Manifest, Report};
use crate::seeds;
use crate::suite::{self, DriverFileAudit, SuiteOptions, Timed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Driver,
    Solve,
    Manifold,
    Verify,
    ProbeOrder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Driver => "driver",
            Self::Solve => "solve",
            Self::Manifold => "manifold",
            Self::Verify => "verify",
            Self::ProbeOrder => "probe-order",
        }
    }
}

/// A configured run: `base` resolves relative paths inside the config.
#[derive(Debug, Clone)]
pub struct Run {
    pub command: Command,
    pub config: RunConfig,
    pub base: PathBuf,
}

/// Report plus per-criterion wall times (kept out of the report so that it
/// stays reproducible).
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub timings: Vec<(String, std::time::Duration)>,
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

impl Run {
    pub fn execute(&self) -> Result<Outcome> {
        let mut w = Writer::new(&self.config.output_dir)?;
        let mut report = Report::new(self.command.name(), self.config.seed);
        let mut timings = Vec::new();
        let details = match self.command {
            Command::Driver => self.driver(&mut w, &mut report)?,
            Command::Solve => self.solve(&mut w, &mut report)?,
            Command::Manifold => self.manifold(&mut w, &mut report)?,
            Command::Verify => {
                let t = self.verify(&mut report)?;
                timings = t
                    .into_iter()
                    .map(|t| (t.criterion.id.clone(), t.elapsed))
                    .collect();
                json!({})
            }
            Command::ProbeOrder => self.probe_order(&mut w, &mut report)?,
        };
        let manifest = Manifest {
            command: self.command.name().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: self.config.seed,
            config_sha256: seeds::sha256_hex(self.config.canonical_json().as_bytes()),
            artifacts: w.written.clone(),
            details,
        };
        w.put("manifest.json", &manifest.to_json())?;
        report.artifacts = w.written.clone();
        report.artifacts.push("report.json".into());
        let text = report.to_json();
        w.put("report.json", &text)?;
        Ok(Outcome { report, timings })
    }

    fn driver_seed(&self) -> u64 {
        seeds::substream(self.config.seed, seeds::DRIVER)
    }

    fn build_driver(&self) -> Result<RoughPath> {
        self.config.driver()?.build(self.driver_seed(), &self.base)
    }

    fn driver(&self, w: &mut Writer, report: &mut Report) -> Result<serde_json::Value> {
        let d = self.config.driver()?;
        let p = self.build_driver()?;
        let (chen, exhaustive) = chen_audit(&p, self.config.seed);
        let norms = p.holder_norms();
        report.metric("chen_defect", chen);
        report.metric("holder_w", norms.w);
        report.metric("holder_w2", norms.w2);
        report.metric("symmetric_defect", p.symmetric_defect());
        report.criteria.push(Criterion::new(
            "chen",
            if exhaustive {
                "Chen relation on all grid triples"
            } else {
                "Chen relation on sampled grid triples"
            },
            vec![Check::at_most("Chen defect", chen, DEFAULT_CHEN_TOL)],
        ));
        match self.config.format {
            Format::Csv => {
                let (a, b) = formats::driver_csv(&p);
                w.put("driver.csv", &a)?;
                w.put("driver_w2.csv", &b)?;
            }
            Format::Json => w.put("driver.json", &formats::driver_json(&p))?,
        }
        Ok(
            json!({ "kind": d.kind, "dim": p.dim(), "gamma": p.gamma(), "n_points": p.grid().len(), "t0": p.grid().t0(), "t1": p.grid().t1() }),
        )
    }

    fn solve(&self, w: &mut Writer, report: &mut Report) -> Result<serde_json::Value> {
        let p = self.build_driver()?;
        let eq = self.config.equation(p.dim())?;
        let sec = self
            .config
            .solver
            .as_ref()
            .context("missing [solver] table")?;
        let cfg = sec.solve_config(p.gamma())?;
        ensure!(
            sec.xi.len() == eq.n_modes(),
            "[solver] xi has {} entries, the operator has {} modes",
            sec.xi.len(),
            eq.n_modes()
        );
        let (traj, err) = solve_global_partial(&eq, &sec.xi, &p, sec.horizon, &cfg);
        let samples = traj.samples();
        let reached = samples.last().map_or(0.0, |s| s.0);
        report.metric("reached_time", reached);
        report.metric("segments", traj.segments.len() as f64);
        report.metric("max_residual", traj.max_residual());
        report.metric("apriori_m", traj.apriori.m);
        report.metric("apriori_worst_ratio", traj.apriori.worst_ratio);
        let mut checks = vec![Check::at_least("reached time", reached, sec.horizon)];
        if let Some(e) = &err {
            checks.push(Check::error("global solve", e));
        }
        checks.push(Check::at_most(
            "max mild-equation residual",
            traj.max_residual(),
            2.0 * cfg.picard_tol,
        ));
        report
            .criteria
            .push(Criterion::new("solve", "global mild solution", checks));

        match self.config.format {
            Format::Csv => w.put("trajectory.csv", &formats::trajectory_csv(&samples))?,
            Format::Json => w.put("trajectory.json", &formats::trajectory_json(&samples))?,
        }
        let segments: Vec<_> = traj
            .segments
            .iter()
            .map(|s| {
                json!({
                    "t0": s.start,
                    "horizon": s.solution.horizon,
                    "iterations": s.solution.iterations,
                    "contraction": s.solution.contraction,
                    "residual": s.solution.residual,
                    "attempts": s.solution.attempts,
                })
            })
            .collect();
        let diagnostics = json!({
            "segments": segments,
            "apriori": { "m": traj.apriori.m, "worst_ratio": traj.apriori.worst_ratio, "holds": traj.apriori.holds },
            "error": err.as_ref().map(|e| e.to_string()),
        });
        w.put(
            "diagnostics.json",
            &(serde_json::to_string_pretty(&diagnostics)? + "\n"),
        )?;
        if sec.write_segments {
            for (j, s) in traj.segments.iter().enumerate() {
                w.put(
                    &format!("segment_{j:03}.csv"),
                    &formats::controlled_csv(&s.solution.path)?,
                )?;
            }
        }
        Ok(json!({
            "xi": sec.xi,
            "horizon": sec.horizon,
            "solver": {
                "eta": cfg.eta,
                "picard_tol": cfg.picard_tol,
                "max_picard": cfg.max_picard,
                "step_shrink": cfg.step_shrink,
                "contraction_limit": cfg.contraction_limit,
                "initial_guess": format!("{:?}", cfg.initial_guess),
            },
        }))
    }

    fn manifold(&self, w: &mut Writer, report: &mut Report) -> Result<serde_json::Value> {
        let p = self.build_driver()?;
        let eq = self.config.equation(p.dim())?;
        let sec = self
            .config
            .manifold
            .as_ref()
            .context("missing [manifold] table")?;
        let cfg = sec.lp_config(&eq.op)?;
        let ctx = ManifoldContext::new(
            &eq,
            &p,
            cfg.clone(),
            sec.ball_radius,
            seeds::substream(self.config.seed, seeds::PROBES),
        )?;

        let mut points = ctx.mesh(sec.n_per_axis);
        let mut rng = math::rng_for(seeds::substream(self.config.seed, seeds::MESH), 0);
        for _ in 0..sec.random_points {
            points.push(uniform_in_ball(&mut rng, ctx.n_unstable, ctx.radius));
        }
        let mut samples: Vec<_> = points.par_iter().map(|x| ctx.sample(x)).collect();
        samples.sort_by(|a, b| {
            a.xi_u
                .iter()
                .zip(&b.xi_u)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let graph = ManifoldGraph::from_samples(&ctx, samples);

        report.metric("c", ctx.constants.c);
        report.metric("c_f", ctx.constants.c_f);
        report.metric("c_g", ctx.constants.c_g);
        report.metric("cutoff_radius", ctx.cutoff().r);
        report.metric("ball_radius", ctx.radius);
        report.metric("gap_value", ctx.gap.value);
        report.metric("lipschitz_estimate", graph.lipschitz_estimate);
        let max_rate = graph
            .samples
            .iter()
            .filter(|s| s.converged)
            .map(|s| s.max_rate)
            .fold(0.0, f64::max);
        let max_iter = graph
            .samples
            .iter()
            .map(|s| s.iterations)
            .max()
            .unwrap_or(0);
        report.metric("max_rate", max_rate);
        report.metric("max_iterations", max_iter as f64);
        report.criteria.push(Criterion::new(
            "gap",
            "gap condition",
            vec![Check::at_most("gap condition value", ctx.gap.value, 0.5)],
        ));
        report.criteria.push(Criterion::new(
            "fixed-point",
            "Lyapunov-Perron fixed point at every sample",
            vec![
                Check::holds("all samples converged", graph.all_converged()),
                Check::at_most("max iterations", max_iter as f64, cfg.max_lp_iters as f64),
            ],
        ));

        let mut inv = Vec::new();
        if sec.invariance_time > 0.0 {
            let scfg = self.config.solver.as_ref().map_or_else(
                || Ok(roughflow_core::solver::SolveConfig::for_gamma(p.gamma())),
                |s| s.solve_config(p.gamma()),
            )?;
            let budget = 50.0 * (cfg.lp_tol + scfg.picard_tol);
            let mut checks = Vec::new();
            for &f in &sec.invariance_fractions {
                let mut x = vec![0.0; ctx.n_unstable];
                x[0] = f * ctx.radius;
                match invariance_defect(&ctx, &eq, &p, &x, sec.invariance_time, &scfg) {
                    Ok(r) => {
                        checks.push(Check::at_most(
                            format!("invariance defect at {f}·ρ"),
                            r.defect,
                            budget,
                        ));
                        inv.push(json!({ "fraction": f, "defect": r.defect, "out_of_ball": r.out_of_ball }));
                    }
                    Err(e) => checks.push(Check::error(format!("invariance at {f}·ρ"), e)),
                }
            }
            if !checks.is_empty() {
                report.criteria.push(Criterion::new(
                    "invariance",
                    "graph invariance under the flow",
                    checks,
                ));
            }
        }

        match self.config.format {
            Format::Csv => w.put("graph.csv", &formats::graph_csv(&graph.samples))?,
            Format::Json => w.put("graph.json", &formats::graph_json(&graph.samples))?,
        }
        Ok(json!({
            "lp_config": {
                "alpha": cfg.alpha,
                "beta": cfg.beta,
                "delta": cfg.delta,
                "k": cfg.k,
                "k_max": cfg.k_max,
                "lp_tol": cfg.lp_tol,
                "max_lp_iters": cfg.max_lp_iters,
                "enforce_gap": cfg.enforce_gap,
                "check_assumptions": cfg.check_assumptions,
            },
            "constants": { "c": ctx.constants.c, "c_f": ctx.constants.c_f, "c_g": ctx.constants.c_g },
            "cutoff_radius": ctx.cutoff().r,
            "ball_radius": ctx.radius,
            "gap": { "value": ctx.gap.value, "ok": ctx.gap.ok },
            "n_unstable": ctx.n_unstable,
            "invariance": inv,
        }))
    }

    fn verify(&self, report: &mut Report) -> Result<Vec<Timed>> {
        let sec = self.config.verify.clone().unwrap_or_default();
        let mut opts = SuiteOptions::new(self.config.seed);
        opts.chen_seeds = sec.chen_seeds;
        if let Some(path) = &sec.driver_file {
            let full = self.base.join(path);
            let defect = formats::read_driver_unchecked(&full, sec.driver_gamma)
                .map(|p| chen_audit(&p, self.config.seed).0)
                .map_err(|e| format!("{e:#}"));
            let label = path.file_name().map_or_else(
                || path.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            opts.driver_file = Some(DriverFileAudit { label, defect });
        }
        let timed = suite::run(&opts);
        for t in &timed {
            for c in &t.criterion.checks {
                report.metric(format!("{}: {}", t.criterion.id, c.name), c.measured);
            }
            report.criteria.push(t.criterion.clone());
        }
        Ok(timed)
    }

    fn probe_order(&self, w: &mut Writer, report: &mut Report) -> Result<serde_json::Value> {
        let sec = self.config.probe.clone().unwrap_or_default();
        for g in &sec.gammas {
            if !(*g > 1.0 / 3.0 && *g <= 0.5) {
                bail!("[probe] gamma must lie in (1/3, 1/2], got {g}");
            }
        }
        let runs = suite::order_runs(
            self.config.seed,
            &sec.gammas,
            &sec.drivers,
            sec.beta,
            sec.n_points,
        )?;
        for r in &runs {
            report.metric(format!("exponent {}", r.label), r.probe.exponent);
            report.metric(
                format!("exponent_stderr {}", r.label),
                r.probe.exponent_stderr,
            );
        }
        report.criteria.push(Criterion::new(
            "order",
            "local error exponent",
            suite::order_checks(&runs, sec.beta, sec.slack),
        ));
        let body = match self.config.format {
            Format::Csv => {
                let mut s = String::from("driver,gamma,length,rms_residual\n");
                for r in &runs {
                    for (l, e) in r.probe.lengths.iter().zip(&r.probe.rms_residuals) {
                        let kind = r.label.split(' ').next().unwrap_or("");
                        s.push_str(&format!(
                            "{kind},{},{},{}\n",
                            formats::num(r.gamma),
                            formats::num(*l),
                            formats::num(*e)
                        ));
                    }
                }
                ("probe.csv", s)
            }
            Format::Json => {
                let rows: Vec<_> = runs
                    .iter()
                    .map(|r| json!({ "label": r.label, "gamma": r.gamma, "exponent": r.probe.exponent, "lengths": r.probe.lengths, "rms_residuals": r.probe.rms_residuals }))
                    .collect();
                ("probe.json", serde_json::to_string(&rows)? + "\n")
            }
        };
        w.put(body.0, &body.1)?;
        Ok(json!({ "beta": sec.beta, "n_points": sec.n_points, "slack": sec.slack }))
    }
}

/// Exhaustive Chen defect on small grids, sampled triples otherwise.
pub fn chen_audit(p: &RoughPath, seed: u64) -> (f64, bool) {
    if p.grid().len() <= FULL_CHEN_AUDIT_MAX_POINTS {
        (p.chen_defect(), true)
    } else {
        (
            p.chen_defect_sampled(20_000, seeds::substream(seed, seeds::PROBES)),
            false,
        )
    }
}

fn uniform_in_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        if math::norm2(&x) <= radius {
            return x;
        }
    }
}
