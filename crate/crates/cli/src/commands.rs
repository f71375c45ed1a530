
use anyhow::{anyhow, bail, Context, Result};

use fracheat_core::envelopes::{example1_envelope, green_shape, heat_envelope, envelope_units, Example1Constants};
use fracheat_core::spectral::SpectralModel;
use fracheat_core::stable_sim::{estimate_kernel, estimate_kernel_batch, estimate_survival_curve, Potential};
use fracheat_core::thresholds::{solve_t0_with_residual, Classification};
use fracheat_core::verify::{
    fit_with_c0_ladder, green_check, regime_partition, spectral_table, LadderFit, ValuePoint,
};
use fracheat_core::{EnvelopeConfig, ExperimentConfig};

use crate::output::{point, scatter_svg, Cell, Provenance, Series, Sink, Table};
use crate::{Cli, Command, EnvelopeAction, Oracle, SimulateAction, SpectralAction, T0Action};

pub enum Outcome {
    Success,
    VerifyFailed,
}

/// Resolved configuration plus output plumbing shared by all subcommands.
struct Run {
    config: ExperimentConfig,
    sink: Sink,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::from_toml_str("")?,
    };
    if let Some(a) = cli.alpha {
        config.alpha = a;
    }
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }
    if let Command::Spectral { l, n, k, .. } = &cli.command {
        if let Some(l) = l {
            config.spectral.l = *l;
        }
        if let Some(n) = n {
            config.spectral.n = *n;
            config.spectral.k = config.spectral.k.min(*n);
        }
        if let Some(k) = k {
            config.spectral.k = *k;
        }
    }
    if let Command::Simulate {
        action: SimulateAction::Kernel { delta: Some(d), .. },
    } = &cli.command
    {
        config.sim.delta = Some(*d);
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let config = load_config(&cli)?;
    let out = cli.out.clone().map(|p| {
        if p.is_relative() && config.output.dir != *"." {
            config.output.dir.join(p)
        } else {
            p
        }
    });
    let sink = Sink {
        out,
        json: cli.json,
        provenance: Provenance {
            config_hash: config.fingerprint(),
            seed: config.sim.seed,
        },
    };
    let cx = Run { config, sink };
    match cli.command {
        Command::T0 { action: None, s } => t0(&cx, &s),
        Command::T0 { action: Some(T0Action::Fit), .. } => t0_fit(&cx),
        Command::Envelope {
            action: Some(EnvelopeAction::Sweep { lambda1 }),
            lambda1: outer,
            ..
        } => envelope_sweep(&cx, lambda1.or(outer)),
        Command::Envelope {
            action: None,
            t,
            x,
            y,
            lambda1,
        } => {
            let t = t.ok_or_else(|| anyhow!("envelope needs --t (or use `envelope sweep`)"))?;
            if x.is_empty() || y.is_empty() {
                bail!("envelope needs --x and --y");
            }
            envelope(&cx, t, &x, &y, lambda1)
        }
        Command::Green { points } => green(&cx, &points.x, &points.y),
        Command::Simulate {
            action: SimulateAction::Survival { x, t },
        } => survival(&cx, &x, &t),
        Command::Simulate {
            action: SimulateAction::Kernel { points, t, .. },
        } => sim_kernel(&cx, &points.x, &points.y, t),
        Command::Spectral { action: None, modes, .. } => spectral(&cx, modes),
        Command::Spectral {
            action: Some(SpectralAction::Kernel { t, points }),
            ..
        } => spectral_kernel(&cx, t, &points.x, &points.y),
        Command::Verify { oracle } => verify(&cx, oracle),
        Command::Example1 { beta, t, points } => example1(&cx, beta, t, &points.x, &points.y),
    }
}

fn done(cx: &Run, table: &Table) -> Result<Outcome> {
    cx.sink.write(table)?;
    Ok(Outcome::Success)
}

fn t0(cx: &Run, radii: &[f64]) -> Result<Outcome> {
    let c = &cx.config;
    let profile = c.build_profile()?;
    let mut table = Table::new(&["s", "t0", "residual"]);
    for &s in radii {
        let (t, r) = solve_t0_with_residual(&profile, c.alpha, s, c.thresholds.tol)?;
        table.push(vec![s.into(), t.into(), r.into()]);
    }
    done(cx, &table)
}

fn t0_fit(cx: &Run) -> Result<Outcome> {
    let th = cx.config.threshold_model()?;
    eprintln!(
        "classification={} C_*={:.6} C_**={:.6} T0={:.6} T_inf={} q1={:.4}",
        th.classification, th.c_star, th.c_star_star, th.t0_cap, th.t_inf, th.q1
    );
    let mut table = Table::new(&["s", "t0", "residual", "h"]);
    for (i, &s) in th.sample_s.iter().enumerate() {
        table.push(vec![s.into(), th.sample_t0[i].into(), th.residuals[i].into(), th.h_fit[i].into()]);
    }
    done(cx, &table)
}

/// Loads the cached spectral model when it matches the configuration, else builds
/// (and caches) it.
fn spectral_model(config: &ExperimentConfig, k: usize) -> Result<SpectralModel> {
    let sp = &config.spectral;
    let profile = config.build_profile()?;
    if profile.dimension() != 1 {
        bail!("the spectral oracle is one-dimensional (profile.d = {})", profile.dimension());
    }
    if let Some(path) = &sp.cache {
        if path.exists() {
            match SpectralModel::load(path) {
                Ok(m) if m.matches(sp.l, sp.n, k, config.alpha, &profile) => return Ok(m),
                Ok(_) => eprintln!("spectral cache {} is stale; rebuilding", path.display()),
                Err(e) => eprintln!("spectral cache {} unreadable ({e}); rebuilding", path.display()),
            }
        }
    }
    let model = SpectralModel::build(sp.l, sp.n, k, config.alpha, &profile)?;
    if let Some(path) = &sp.cache {
        model.save(path).with_context(|| format!("writing cache {}", path.display()))?;
    }
    Ok(model)
}

fn envelope_config(config: &ExperimentConfig, lambda1: Option<f64>) -> Result<EnvelopeConfig> {
    let lambda1 = match lambda1.or(config.envelope.lambda1) {
        Some(l) => l,
        None => spectral_model(config, config.spectral.k)?.eigenvalues[0],
    };
    Ok(config.envelope_config(Some(lambda1))?)
}

fn envelope_row(t: f64, x: &[f64], y: &[f64], cfg: &EnvelopeConfig) -> Result<Vec<Cell>> {
    let e = heat_envelope(t, x, y, cfg)?;
    Ok(vec![t.into(), point(x), point(y), e.regime.as_str().into(), e.lower.into(), e.upper.into()])
}

const ENVELOPE_COLUMNS: [&str; 6] = ["t", "x", "y", "regime", "lower", "upper"];

fn envelope(cx: &Run, t: f64, x: &[f64], y: &[f64], lambda1: Option<f64>) -> Result<Outcome> {
    let cfg = envelope_config(&cx.config, lambda1)?;
    let mut table = Table::new(&ENVELOPE_COLUMNS);
    table.push(envelope_row(t, x, y, &cfg)?);
    done(cx, &table)
}

/// A grid coordinate embedded on the first axis.
fn axis_point(v: f64, d: usize) -> Vec<f64> {
    let mut p = vec![0.0; d];
    p[0] = v;
    p
}

fn envelope_sweep(cx: &Run, lambda1: Option<f64>) -> Result<Outcome> {
    let cfg = envelope_config(&cx.config, lambda1)?;
    let grid = &cx.config.verify.grid;
    let mut table = Table::new(&ENVELOPE_COLUMNS);
    for t in grid.times() {
        for &a in &grid.points {
            for &b in &grid.points {
                table.push(envelope_row(t, &axis_point(a, cfg.d), &axis_point(b, cfg.d), &cfg)?);
            }
        }
    }
    done(cx, &table)
}

fn green(cx: &Run, x: &[f64], y: &[f64]) -> Result<Outcome> {
    let th = cx.config.threshold_model()?;
    if th.classification == Classification::Neither {
        bail!("the threshold profile is neither almost increasing nor almost decreasing");
    }
    let g = green_shape(&th.profile, th.alpha, x, y)?;
    let mut table = Table::new(&["x", "y", "value", "q", "branch"]);
    table.push(vec![point(x), point(y), g.value.into(), g.q.into(), g.branch.as_str().into()]);
    done(cx, &table)
}

const SIM_COLUMNS: [&str; 6] = ["t", "x", "y", "estimate", "stderr", "bias_note"];

fn survival(cx: &Run, x: &[f64], times: &[f64]) -> Result<Outcome> {
    let cfg = cx.config.sim_config(Potential::Profile(cx.config.build_profile()?));
    let curve = estimate_survival_curve(x, times, &cfg)?;
    let note = format!(
        "left-endpoint time discretization; step max(t)/{}",
        cfg.n_steps
    );
    let mut table = Table::new(&SIM_COLUMNS);
    for (&t, (mean, se)) in times.iter().zip(curve) {
        table.push(vec![t.into(), point(x), "".into(), mean.into(), se.into(), note.clone().into()]);
    }
    done(cx, &table)
}

fn sim_kernel(cx: &Run, x: &[f64], y: &[f64], t: f64) -> Result<Outcome> {
    let cfg = cx.config.sim_config(Potential::Profile(cx.config.build_profile()?));
    let est = estimate_kernel(x, y, t, &cfg)?;
    let mut table = Table::new(&SIM_COLUMNS);
    table.push(vec![
        t.into(),
        point(x),
        point(y),
        est.values[0].into(),
        est.stderrs[0].into(),
        format!("{} (bound {:e})", est.bias_note, est.bias_bounds[0]).into(),
    ]);
    done(cx, &table)
}

fn spectral(cx: &Run, modes: usize) -> Result<Outcome> {
    let model = spectral_model(&cx.config, cx.config.spectral.k)?;
    let mut table = Table::new(&["index", "eigenvalue"]);
    for (i, &lam) in model.eigenvalues.iter().enumerate() {
        table.push(vec![(i + 1).into(), lam.into()]);
    }
    cx.sink.write(&table)?;
    eprintln!(
        "lambda1={} edge V(L)/lambda1={:.3e}",
        model.eigenvalues[0], model.diagnostics.edge_potential_ratio
    );
    if let Some(path) = cx.sink.sibling("_eigenfunctions", "csv") {
        let m = modes.min(model.k);
        let mut columns = vec!["x".to_owned()];
        columns.extend((1..=m).map(|k| format!("phi_{k}")));
        let mut phi = Table {
            columns,
            rows: Vec::new(),
        };
        for i in 0..model.n {
            let mut row = vec![Cell::Num(model.node(i))];
            row.extend((0..m).map(|k| Cell::Num(model.eigenfunctions[(i, k)])));
            phi.push(row);
        }
        cx.sink.write_to(&phi, Some(&path))?;
    }
    Ok(Outcome::Success)
}

fn spectral_kernel(cx: &Run, t: f64, x: &[f64], y: &[f64]) -> Result<Outcome> {
    if x.len() != 1 || y.len() != 1 {
        bail!("spectral kernel points are one-dimensional");
    }
    let model = spectral_model(&cx.config, cx.config.spectral.k)?;
    let (i, j) = (model.node_index(x[0]), model.node_index(y[0]));
    let kv = model.kernel_value(t, i, j);
    let mut table = Table::new(&["t", "x", "y", "node_x", "node_y", "value", "truncation_ratio"]);
    table.push(vec![
        t.into(),
        x[0].into(),
        y[0].into(),
        model.node(i).into(),
        model.node(j).into(),
        kv.value.into(),
        kv.truncation_ratio.into(),
    ]);
    done(cx, &table)
}

/// Monte Carlo kernel table on the verify grid, restricted to `t ≤ 2` and
/// `|x|, |y| ≤ 4`, at grid nodes of `model`.
fn mc_table(config: &ExperimentConfig, model: &SpectralModel) -> Result<Vec<ValuePoint>> {
    let grid = &config.verify.grid;
    let nodes: Vec<f64> = grid
        .points
        .iter()
        .filter(|p| p.abs() <= 4.0)
        .map(|&p| model.node(model.node_index(p)))
        .collect();
    let ys: Vec<Vec<f64>> = nodes.iter().map(|&y| vec![y]).collect();
    let mut out = Vec::new();
    let mut batch = 0u64;
    for t in grid.times().into_iter().filter(|&t| t <= 2.0) {
        for &x in &nodes {
            let mut cfg = config.sim_config(Potential::Profile(model.profile.clone()));
            cfg.seed = cfg.seed.wrapping_add(batch);
            batch += 1;
            let est = estimate_kernel_batch(&[x], &ys, t, &cfg)?;
            for (k, y) in ys.iter().enumerate() {
                out.push(ValuePoint {
                    t,
                    x: vec![x],
                    y: y.clone(),
                    value: est.values[k],
                });
            }
        }
    }
    Ok(out)
}

fn verify(cx: &Run, oracle: Oracle) -> Result<Outcome> {
    let c = &cx.config;
    let v = &c.verify;
    let model = spectral_model(c, v.modes.unwrap_or(c.spectral.n))?;
    let cfg = c.envelope_config(Some(c.envelope.lambda1.unwrap_or(model.eigenvalues[0])))?;
    let values = match oracle {
        Oracle::Spectral => spectral_table(&model, &v.grid),
        Oracle::Mc => mc_table(c, &model)?,
    };
    let fit: LadderFit = fit_with_c0_ladder(&values, &cfg, &v.fit, &v.thresholds)?;
    let report = &fit.report;

    let mut summary = Table::new(&[
        "regime",
        "n_points",
        "min_ratio_lower",
        "max_ratio_upper",
        "spread",
        "threshold",
        "pass",
    ]);
    for s in &report.stats {
        let threshold = v.thresholds.get(s.regime);
        summary.push(vec![
            s.regime.as_str().into(),
            s.n_points.into(),
            s.min_ratio_lower.into(),
            s.max_ratio_upper.into(),
            s.spread.into(),
            threshold.into(),
            (s.spread <= threshold).to_string().into(),
        ]);
    }
    let mut pass = report.pass;
    if oracle == Oracle::Spectral {
        let g = green_check(&model, &v.grid.points, 0.05, 8.0, v.green_threshold)?;
        summary.push(vec![
            format!("green_{}", g.branch.as_str()).into(),
            g.stats.n_points.into(),
            g.stats.min_ratio_lower.into(),
            g.stats.max_ratio_upper.into(),
            g.stats.spread.into(),
            v.green_threshold.into(),
            g.pass.to_string().into(),
        ]);
        pass &= g.pass;
    }
    cx.sink.write(&summary)?;
    let k = &fit.config.constants;
    eprintln!(
        "C0={} c_lower_exp={:.4} c_upper_exp={:.4} pass={pass}",
        fit.c0, k.c_lower_exp, k.c_upper_exp
    );

    if let Some(path) = cx.sink.sibling("_points", "csv") {
        let mut points = Table::new(&["t", "x", "y", "regime", "value", "lower", "upper"]);
        let mut series: Vec<Series> = Vec::new();
        for p in &values {
            let regime = regime_partition(p.t, &p.x, &p.y, &fit.config)?;
            let (lo, up) = envelope_units(regime, p.t, &p.x, &p.y, &fit.config)?;
            let pref = k.prefactors.get(regime);
            let (lo, up) = (lo * pref.lower, up * pref.upper);
            points.push(vec![
                p.t.into(),
                point(&p.x),
                point(&p.y),
                regime.as_str().into(),
                p.value.into(),
                lo.into(),
                up.into(),
            ]);
            match series.iter_mut().find(|s| s.label == regime.as_str()) {
                Some(s) => s.points.push((p.t, p.value / lo)),
                None => series.push(Series {
                    label: regime.as_str().into(),
                    points: vec![(p.t, p.value / lo)],
                }),
            }
        }
        cx.sink.write_to(&points, Some(&path))?;
        if let Some(svg) = cx.sink.sibling("", "svg") {
            // plots are best-effort
            if let Err(e) = std::fs::write(&svg, scatter_svg("value / lower envelope", &series)) {
                eprintln!("warning: could not write {}: {e}", svg.display());
            }
        }
    }
    Ok(if pass { Outcome::Success } else { Outcome::VerifyFailed })
}

fn example1(cx: &Run, beta: f64, t: f64, x: &[f64], y: &[f64]) -> Result<Outcome> {
    let e = example1_envelope(t, x, y, beta, cx.config.alpha, &Example1Constants::default())?;
    let mut table = Table::new(&ENVELOPE_COLUMNS);
    table.push(vec![t.into(), point(x), point(y), e.regime.as_str().into(), e.lower.into(), e.upper.into()]);
    done(cx, &table)
}
