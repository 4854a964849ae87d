//! Subcommand implementations.

use anyhow::Result;
use std::path::Path;

use nlkg::classify::{
    classify_direction, ejection_fit, family_soliton_bump, family_stable_direction,
    family_unstable_direction, nine_set_scan, one_pass_audit, Outcome, ScanResult, ScanSpec,
};
use nlkg::evolve::{evolve, EvolveOpts, Termination, Trajectory};
use nlkg::grid::{EvenField, Grid, StateVec};
use nlkg::manifold::{
    center_stable_solve, scattering_data, shoot_threshold, solution_distance, BranchLabel, CsOpts,
    ShootOpts, SolveSeed,
};
use nlkg::soliton::{soliton_profile, SolitonData};
use nlkg::spectral::{
    assemble_l, ground_state, local_decay_ratio, resonance_check_refined, spectral_measure,
    zero_mode_residuals, LambdaGrid, OperatorKind, SchrodingerOp, SpectralMeasure,
};
use nlkg::ModelParams;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ConfigError};
use crate::output::{fnum, RunDir, Table};
use crate::{Cli, Command, EXIT_CONFIG, EXIT_INCOMPLETE, EXIT_NUMERICAL};

pub fn classify_exit(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<toml::de::Error>().is_some() {
        EXIT_CONFIG
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        EXIT_INCOMPLETE
    } else {
        EXIT_NUMERICAL
    }
}

/// Shared per-run context.
pub struct Lab {
    pub cfg: Config,
    pub params: ModelParams,
    pub seed: u64,
    pub horizon_scale: f64,
}

impl Lab {
    pub fn new(cli: &Cli) -> Result<Lab> {
        let mut cfg = Config::load(cli.config.as_deref())?;
        if let Some(seed) = cli.seed {
            cfg.experiment.seed = seed;
        }
        let params = cfg.params()?;
        Ok(Lab {
            seed: cfg.experiment.seed,
            horizon_scale: cli.horizon_scale,
            params,
            cfg,
        })
    }

    pub fn soliton(&self, grid: &Grid) -> Result<SolitonData> {
        Ok(soliton_profile(&self.params, grid)?)
    }

    pub fn evolve_opts(&self, grid: &Grid, t_max: f64) -> EvolveOpts {
        let mut o = EvolveOpts::defaults(grid, &self.params, t_max * self.horizon_scale);
        o.dt = self.cfg.model.dt_factor * grid.spacing();
        o.blowup_cap = self.cfg.model.blowup_cap_factor * self.params.alpha;
        o.record_every = self.cfg.experiment.record_every;
        o.support_radius = self.cfg.experiment.support_radius;
        o
    }

    pub fn lambda_grid(&self) -> LambdaGrid {
        let mut lg = LambdaGrid::new(self.cfg.constants.lambda_max, self.cfg.spectral.s_step);
        lg.diag_per_decade = self.cfg.spectral.diag_per_decade;
        lg
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore failure: the global pool may exist already (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let lab = Lab::new(cli)?;
    let run = RunDir::acquire(&cli.out)?;
    let res = match cli.command {
        Command::Spectral => cmd_spectral(&lab, &run.path),
        Command::DecayProbe => cmd_decay_probe(&lab, &run.path),
        Command::Evolve => cmd_evolve(&lab, &run.path),
        Command::Scan => cmd_scan(&lab, &run.path).map(|_| ()),
        Command::Eject => cmd_eject(&lab, &run.path),
        Command::Onepass => cmd_onepass(&lab, &run.path),
        Command::Shoot => cmd_shoot(&lab, &run.path),
        Command::Manifold => cmd_manifold(&lab, &run.path),
        Command::Report => crate::report::cmd_report(&lab, &run.path),
    };
    match res {
        Ok(()) => run.finish(),
        Err(e) => Err(e),
    }
}

fn outcome_label(o: &Outcome) -> String {
    o.label().to_string()
}

pub fn cmd_spectral(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.grid()?;
    let op = assemble_l(OperatorKind::Plus, &lab.params, &grid);
    let m = spectral_measure(&op, &lab.lambda_grid())?;

    let mut t = Table::create(dir, "measure.tsv", cfg, &[("potential", op.tag().to_string())])?;
    t.columns(&["lambda", "mu1", "mu2", "ReW", "ImW"])?;
    for r in m.diag_rows() {
        t.row(&[fnum(r.lambda), fnum(r.mu1), fnum(r.mu2), fnum(r.w_re), fnum(r.w_im)])?;
    }
    t.finish()?;

    let mut t = Table::create(dir, "eigenvalues.tsv", cfg, &[])?;
    t.columns(&["p", "k_squared", "r1_zero_mode", "r2_zero_mode"])?;
    let (rho, eig) = ground_state(&op)?;
    let _ = rho;
    let (r1, r2) = zero_mode_residuals(&lab.params, &grid);
    t.row(&[fnum(cfg.model.p), fnum(-eig), fnum(r1), fnum(r2)])?;
    t.finish()?;

    let mut t = Table::create(dir, "resonance.tsv", cfg, &[])?;
    t.columns(&["potential", "w0_abs", "threshold", "resonant", "refined_w0", "shrink_or_stable"])?;
    let refined_grid = Grid::new(2.0 * grid.half_length(), 4 * grid.len())
        .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))?;
    let cases: Vec<(String, SchrodingerOp, SchrodingerOp)> = vec![
        (
            "plus-kind".into(),
            assemble_l(OperatorKind::Plus, &lab.params, &grid),
            assemble_l(OperatorKind::Plus, &lab.params, &refined_grid),
        ),
        (
            "free".into(),
            SchrodingerOp::new(EvenField::zeros(&grid), "free"),
            SchrodingerOp::new(EvenField::zeros(&refined_grid), "free"),
        ),
        (
            "cubic-resonant".into(),
            SchrodingerOp::new(
                EvenField::from_fn(&grid, |x| -6.0 / x.cosh().powi(2)),
                "-6 sech^2",
            ),
            SchrodingerOp::new(
                EvenField::from_fn(&refined_grid, |x| -6.0 / x.cosh().powi(2)),
                "-6 sech^2",
            ),
        ),
    ];
    for (name, base, refined) in cases {
        let rep = resonance_check_refined(&base, &refined, cfg.constants.tau_res)?;
        let confirm = if rep.base.resonant {
            rep.shrink_confirmed.to_string()
        } else {
            (rep.relative_change < 0.05).to_string()
        };
        t.row(&[
            name,
            fnum(rep.base.w0_abs),
            fnum(rep.base.threshold),
            rep.base.resonant.to_string(),
            fnum(rep.refined_w0_abs),
            confirm,
        ])?;
    }
    t.finish()?;
    Ok(())
}

/// Seeded even test ensemble: localized bumps of varied width, center, and
/// oscillation.
pub fn test_ensemble(grid: &Grid, count: usize, seed: u64) -> Vec<EvenField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let width: f64 = rng.gen_range(0.6..2.5);
            let center: f64 = rng.gen_range(0.0..4.0);
            let osc: f64 = rng.gen_range(0.0..1.5);
            let amp: f64 = rng.gen_range(0.5..1.5);
            let f = EvenField::from_fn(grid, |x| {
                amp * (-((x - center) / width).powi(2)).exp() * (osc * x).cos()
            });
            let n = f.l2_norm();
            f.scaled(1.0 / n)
        })
        .collect()
}

pub fn cmd_decay_probe(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.grid()?;
    let lg = lab.lambda_grid();
    let plus = assemble_l(OperatorKind::Plus, &lab.params, &grid);
    let m_plus = spectral_measure(&plus, &lg)?;
    let cubic = SchrodingerOp::new(
        EvenField::from_fn(&grid, |x| -6.0 / x.cosh().powi(2)),
        "-6 sech^2",
    );
    let m_cubic = spectral_measure(&cubic, &lg)?;
    let ensemble = test_ensemble(&grid, cfg.experiment.ensemble_size, lab.seed);
    let mut t = Table::create(dir, "decay.tsv", cfg, &[])?;
    t.columns(&["fn_id", "horizon", "ratio_plus_kind", "ratio_resonant"])?;
    for (i, f) in ensemble.iter().enumerate() {
        for &horizon in &cfg.experiment.decay_horizons {
            let a = local_decay_ratio(f, horizon, &m_plus)?;
            let b = local_decay_ratio(f, horizon, &m_cubic)?;
            t.row(&[i.to_string(), fnum(horizon), fnum(a.ratio), fnum(b.ratio)])?;
        }
    }
    t.finish()?;
    Ok(())
}

fn family_state(_lab: &Lab, sol: &SolitonData, family: &str, a: f64, b: f64) -> Result<StateVec> {
    Ok(match family {
        "soliton+bump" => family_soliton_bump(sol, a, b),
        "stable-dir" => family_stable_direction(sol, a),
        "unstable-dir" => family_unstable_direction(sol, a),
        other => anyhow::bail!(ConfigError(format!("unknown evolve_family `{other}`"))),
    })
}

pub fn cmd_evolve(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.grid()?;
    let sol = lab.soliton(&grid)?;
    let state = family_state(
        lab,
        &sol,
        &cfg.experiment.evolve_family,
        cfg.experiment.evolve_a,
        cfg.experiment.evolve_b,
    )?;
    let opts = lab.evolve_opts(&grid, cfg.model.t_max);
    let traj = evolve(&state, &opts, &sol)?;
    write_trajectory(dir, "trajectory.tsv", cfg, &traj)?;
    write_snapshots(dir, "snapshots.dat", cfg, &traj)?;
    Ok(())
}

pub fn write_trajectory(dir: &Path, name: &str, cfg: &Config, traj: &Trajectory) -> Result<()> {
    let term = match &traj.termination {
        Termination::HorizonReached => "horizon".to_string(),
        Termination::BlowupDetected { t_star } => format!("blowup t*={t_star}"),
        Termination::BoundaryContact { t } => format!("boundary t={t}"),
        Termination::NumericalFault { t, reason } => format!("fault t={t} ({reason})"),
    };
    let mut t = Table::create(dir, name, cfg, &[("termination", term), ("dt", fnum(traj.dt))])?;
    t.columns(&[
        "t",
        "E",
        "K0",
        "K2",
        "dQ",
        "lambda",
        "lambda_plus",
        "lambda_minus",
        "y",
        "h1l2_norm",
        "strichartz_acc",
    ])?;
    for s in &traj.scalars {
        t.row(&[
            fnum(s.t),
            fnum(s.e),
            fnum(s.k0),
            fnum(s.k2),
            fnum(s.d_q),
            fnum(s.lambda),
            fnum(s.lambda_plus),
            fnum(s.lambda_minus),
            fnum(s.y),
            fnum(s.h1l2_norm()),
            fnum(s.strichartz_acc),
        ])?;
    }
    t.finish()?;
    Ok(())
}

pub fn write_snapshots(dir: &Path, name: &str, cfg: &Config, traj: &Trajectory) -> Result<()> {
    let mut t = Table::create(
        dir,
        name,
        cfg,
        &[
            ("dt", fnum(traj.dt)),
            ("snapshots", traj.snapshots.len().to_string()),
            ("fields_per_snapshot", "2".to_string()),
        ],
    )?;
    for (time, state) in &traj.snapshots {
        t.line(&format!("snapshot t = {time}"))?;
        let u: Vec<String> = state.u.values().iter().map(|v| fnum(*v)).collect();
        let ud: Vec<String> = state.ud.values().iter().map(|v| fnum(*v)).collect();
        t.line(&u.join(" "))?;
        t.line(&ud.join(" "))?;
    }
    t.finish()?;
    Ok(())
}

pub fn cmd_scan(lab: &Lab, dir: &Path) -> Result<ScanResult> {
    let cfg = &lab.cfg;
    let grid = cfg.dynamics_grid()?;
    let sol = lab.soliton(&grid)?;
    let mut spec = ScanSpec::dense_grids();
    spec.refine_width = cfg.experiment.scan_refine_width;
    let opts = lab.evolve_opts(&grid, cfg.model.t_max);
    let scan = nine_set_scan(&spec, &opts, &sol)?;

    let mut t = Table::create(dir, "scan.tsv", cfg, &[])?;
    t.columns(&[
        "family", "a", "b", "E", "E_excess", "forward", "backward", "t_star_fwd", "t_star_bwd",
        "final_dQ_fwd", "final_dQ_bwd", "refined", "reversed",
    ])?;
    for c in &scan.cells {
        t.row(&[
            c.family.to_string(),
            fnum(c.a),
            fnum(c.b),
            fnum(c.energy),
            fnum(c.energy_excess),
            outcome_label(&c.forward),
            outcome_label(&c.backward),
            fnum(c.t_star_fwd),
            fnum(c.t_star_bwd),
            fnum(c.final_dq_fwd),
            fnum(c.final_dq_bwd),
            c.refined.to_string(),
            c.reversed.to_string(),
        ])?;
    }
    t.finish()?;

    let m = scan.matrix_counts();
    let mut t = Table::create(dir, "scan_matrix.txt", cfg, &[])?;
    t.line("forward \\ backward\tblowup\tscatter\ttrapped")?;
    for (i, name) in ["blowup", "scatter", "trapped"].iter().enumerate() {
        t.line(&format!("{name}\t{}\t{}\t{}", m[i][0], m[i][1], m[i][2]))?;
    }
    t.line(&format!("nonempty_cells\t{}", scan.nonempty_cell_count()))?;
    t.line(&format!("undecided\t{}", scan.undecided))?;
    t.finish()?;
    Ok(scan)
}

pub fn cmd_eject(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.dynamics_grid()?;
    let sol = lab.soliton(&grid)?;
    let opts = lab.evolve_opts(&grid, cfg.model.t_max);
    let amps = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
    let mut t = Table::create(dir, "eject.tsv", cfg, &[("k", fnum(sol.k))])?;
    t.columns(&[
        "a", "rate", "lambda_rate", "residual", "window_start", "window_end", "C_remainder",
    ])?;
    for &m in &amps {
        for &a in &[m, -m] {
            let st = family_unstable_direction(&sol, a);
            let (_, _, traj) = classify_direction(&st, &opts, &sol)?;
            let fit = ejection_fit(&traj, &sol)?;
            t.row(&[
                fnum(a),
                fnum(fit.rate),
                fnum(fit.lambda_rate),
                fnum(fit.residual),
                fnum(fit.window.0),
                fnum(fit.window.1),
                fnum(fit.remainder_constant),
            ])?;
        }
    }
    t.finish()?;
    Ok(())
}

pub fn cmd_onepass(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.dynamics_grid()?;
    let sol = lab.soliton(&grid)?;
    let opts = lab.evolve_opts(&grid, cfg.model.t_max);
    let trajs = audit_ensemble(&sol, &opts)?;
    let refs: Vec<&Trajectory> = trajs.iter().collect();
    let rep = one_pass_audit(&refs, &sol);
    let mut t = Table::create(dir, "onepass.txt", cfg, &[])?;
    t.line(&format!("trajectories\t{}", rep.trajectories))?;
    t.line(&format!("admissible\t{}", rep.admissible))?;
    t.line(&format!("violations\t{}", rep.violations))?;
    t.line(&format!("sign_stable_fraction\t{}", rep.sign_stable_fraction))?;
    let min_reapproach = rep
        .re_approach_minima
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    t.line(&format!("min_re_approach\t{min_reapproach}"))?;
    t.finish()?;
    Ok(())
}

/// Forward and backward trajectories over the dense scan families.
pub fn audit_ensemble(sol: &SolitonData, opts: &EvolveOpts) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    let spec = ScanSpec::dense_grids();
    let mut states = Vec::new();
    for &a in &spec.family1_a {
        for &b in &spec.family1_b {
            states.push(family_soliton_bump(sol, a, b));
        }
    }
    for &a in &spec.family2_a {
        states.push(family_stable_direction(sol, a));
    }
    let mut all: Vec<StateVec> = Vec::new();
    for s in states {
        all.push(s.time_reversed());
        all.push(s);
    }
    let trajs: Vec<Trajectory> = all
        .par_iter()
        .map(|s| classify_direction(s, opts, sol).map(|(_, _, t)| t))
        .collect::<Result<_, _>>()?;
    Ok(trajs)
}

pub fn cmd_shoot(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.dynamics_grid()?;
    let sol = lab.soliton(&grid)?;
    let opts = ShootOpts {
        width_target: cfg.experiment.shoot_width,
        base: lab.evolve_opts(&grid, cfg.model.t_max),
    };
    let bracket = (cfg.experiment.shoot_bracket[0], cfg.experiment.shoot_bracket[1]);
    let mut t = Table::create(dir, "shoot.tsv", cfg, &[("k", fnum(sol.k))])?;
    t.columns(&[
        "family", "iteration", "a_lo", "a_hi", "outcome_lo", "outcome_hi", "t_trap_mid",
    ])?;
    let mut summary = Table::create(dir, "shoot_summary.txt", cfg, &[])?;
    for (name, orientation) in [("stable-dir", 0), ("unstable-dir", 1)] {
        let family = |a: f64| -> StateVec {
            if orientation == 0 {
                family_stable_direction(&sol, a)
            } else {
                family_unstable_direction(&sol, a)
            }
        };
        let res = shoot_threshold(&family, bracket, &sol, &opts)?;
        for (i, row) in res.log.iter().enumerate() {
            t.row(&[
                name.to_string(),
                i.to_string(),
                fnum(row.a_lo),
                fnum(row.a_hi),
                format!("{:?}", row.outcome_lo),
                format!("{:?}", row.outcome_hi),
                fnum(row.t_trap_mid),
            ])?;
        }
        let branch = match res.branch {
            BranchLabel::WPlusLike => "W+_like (scatters backward)",
            BranchLabel::WMinusLike => "W-_like (blows up backward)",
            BranchLabel::Unresolved => "unresolved",
        };
        summary.line(&format!(
            "{name}\ta*={}\twidth={}\ttrapped_horizon={}\tbranch={branch}\thorizon_slope={}\t1/k={}",
            res.a_star,
            res.bracket.1 - res.bracket.0,
            res.trapped_horizon,
            res.horizon_slope,
            1.0 / sol.k
        ))?;
    }
    t.finish()?;
    summary.finish()?;
    Ok(())
}

pub fn cmd_manifold(lab: &Lab, dir: &Path) -> Result<()> {
    let cfg = &lab.cfg;
    let grid = cfg.dynamics_grid()?;
    let sol = lab.soliton(&grid)?;
    let op = assemble_l(OperatorKind::Plus, &lab.params, &grid);
    let m = spectral_measure(&op, &LambdaGrid::reduced(cfg.constants.lambda_max))?;
    let opts = CsOpts {
        horizon: cfg.experiment.manifold_horizon,
        dt: cfg.experiment.manifold_dt,
        tol: cfg.experiment.manifold_tol,
        max_sweeps: 80,
    };

    let bump = EvenField::from_fn(&grid, |x| (-x * x).exp() * (1.0 - 0.3 * x * x));
    let bump = bump.axpy(-bump.inner(&sol.rho), &sol.rho);
    let bump = bump.scaled(1.0 / bump.l2_norm());

    let mut t = Table::create(dir, "manifold.tsv", cfg, &[])?;
    t.columns(&["nu", "mu_minus0", "mu_plus0", "residual", "energy_defect"])?;
    let mut pts = Vec::new();
    for &delta in &[1e-3, 3e-3, 1e-2, 3e-2, 1e-1] {
        let w0 = StateVec::new(bump.scaled(delta / 2.0), EvenField::zeros(&grid));
        let point = center_stable_solve(&w0, delta / 2.0, &sol, &m, &opts, SolveSeed::FreeFlow)?;
        let sc = scattering_data(&point, &sol, &m);
        t.row(&[
            fnum(delta),
            fnum(point.mu_minus0),
            fnum(point.mu_plus0),
            fnum(point.residual),
            fnum(sc.energy_identity_defect),
        ])?;
        pts.push((delta.ln(), point.mu_plus0.abs().ln()));
    }
    t.finish()?;

    let slope = nlkg::spectral::fit_line_slope(&pts);
    let w0 = StateVec::new(bump.scaled(2e-3), EvenField::zeros(&grid));
    let a = center_stable_solve(&w0, 2e-3, &sol, &m, &opts, SolveSeed::FreeFlow)?;
    let b = center_stable_solve(&w0, 2e-3, &sol, &m, &opts, SolveSeed::Zero)?;
    let uniq = solution_distance(&a, &b, &m);
    let mut s = Table::create(dir, "manifold_summary.txt", cfg, &[])?;
    s.line(&format!("tangency_slope\t{slope}"))?;
    s.line(&format!("uniqueness_distance\t{uniq}"))?;
    s.line(&format!("uniqueness_bound\t{}", 10.0 * opts.tol))?;
    s.finish()?;
    Ok(())
}

/// Exposed for the determinism test: run one subcommand into a directory.
pub fn run_into(cli: &Cli) -> Result<()> {
    dispatch(cli)
}

/// Shared helper for report/tests: the p = 7 measure on the model grid.
pub fn plus_measure(lab: &Lab) -> Result<(SolitonData, SpectralMeasure)> {
    let grid = lab.cfg.grid()?;
    let sol = lab.soliton(&grid)?;
    let op = assemble_l(OperatorKind::Plus, &lab.params, &grid);
    let m = spectral_measure(&op, &lab.lambda_grid())?;
    Ok((sol, m))
}
