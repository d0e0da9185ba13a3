use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use flexpoint::diagnostics::{
    ecdf, ecdf_csv, fit_gamma_renewal, fit_hawkes1d, fit_poisson, hawkes1d_simulate, k_function, k_table_csv,
    Hawkes1DParams,
};
use flexpoint::evaluation::{compare, lpd, ranking_csv, LpdReport};
use flexpoint::event::{validate, parse_events_with, serialize_events, Dataset, MarkId, Sidecar, Taxonomy, TeamId};
use flexpoint::inference::{
    params_to_table, FittedModel, FomcPosterior, HmcConfig, ModelSpec, MsthpPosterior, PosteriorSamples,
};
use flexpoint::marks::{branching_probabilities, Family, PeriodTeams};
use flexpoint::random::{derive_rng, gamma, stream_id};
use flexpoint::screening::{count_pair_support, select_rules, NScope, RuleSet};
use flexpoint::simulate::{interval_probabilities, SimConfig, SimContext};
use flexpoint::zone_model::ZonePosterior;

use crate::config::RunConfig;
use crate::run::Run;
use crate::Failure;

const DEFAULT_ZONES: usize = 3;
const DEFAULT_WINDOW: usize = 5;
const DEFAULT_N: usize = 50;
const DEFAULT_DRAWS: usize = 100;
const DEFAULT_MA_WINDOW: usize = 10;
const DEFAULT_REPLICATES: usize = 100;
const HAWKES_STARTS: usize = 8;

pub fn dispatch(command: &str, cfg: &RunConfig) -> Result<(), Failure> {
    match command {
        "ingest" => ingest(cfg),
        "screen" => screen(cfg),
        "fit" => fit(cfg),
        "evaluate" => evaluate(cfg),
        "branch" => branch(cfg),
        "simulate" => simulate(cfg),
        "diagnose" => diagnose(cfg),
        _ => unreachable!("clap rejects unknown commands"),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn taxonomy(cfg: &RunConfig) -> Result<Taxonomy, Failure> {
    match cfg.taxonomy.as_deref() {
        None | Some("football") => Ok(Taxonomy::football()),
        Some(list) => {
            let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if names.is_empty() {
                return Err(Failure::validation("empty taxonomy"));
            }
            Ok(Taxonomy::paired(&names))
        }
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let path = cfg.existing(&cfg.data, "data")?;
    let sidecar = match &cfg.sidecar {
        Some(_) => Some(Sidecar::from_json(&read(&cfg.existing(&cfg.sidecar, "sidecar")?)?)?),
        None => None,
    };
    let ds = parse_events_with(
        &read(&path)?,
        taxonomy(cfg)?,
        cfg.zones.unwrap_or(DEFAULT_ZONES),
        sidecar.as_ref(),
    )?;
    Ok(ds)
}

fn load_valid(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let ds = load_data(cfg)?;
    let report = validate(&ds);
    if let Some(v) = report.violations.first() {
        return Err(Failure::validation(format!(
            "{} invalid ({} violations, first: {v})",
            cfg.data.as_ref().map_or(String::new(), |p| p.display().to_string()),
            report.violations.len()
        )));
    }
    if ds.periods.is_empty() {
        return Err(Failure::validation("no events in the data"));
    }
    Ok(ds)
}

fn ingest(cfg: &RunConfig) -> Result<(), Failure> {
    let mut run = Run::new("ingest", cfg)?;
    let ds = match load_data(cfg) {
        Ok(ds) => ds,
        Err(f) => {
            run.write("parse_report.txt", &format!("status=failed\n{}\n", f.msg))?;
            run.finish()?;
            return Err(f);
        }
    };
    let report = validate(&ds);
    let mut text = format!(
        "status={}\nperiods={}\nevents={}\nteams={}\nviolations={}\n",
        if report.is_valid() { "ok" } else { "invalid" },
        ds.periods.len(),
        ds.n_events(),
        ds.n_teams(),
        report.violations.len()
    );
    for v in &report.violations {
        let _ = writeln!(text, "{v}");
    }
    run.write("parse_report.txt", &text)?;
    let mut periods = String::from("game,period,events\n");
    for c in &report.period_counts {
        let _ = writeln!(periods, "{},{},{}", c.game_id, c.period_id, c.events);
    }
    run.write("periods.csv", &periods)?;
    run.write("frequency.csv", &report.frequency_csv(&ds.taxonomy))?;
    run.write("events.csv", &serialize_events(&ds))?;
    run.write_json("sidecar.json", &Sidecar::from_dataset(&ds))?;
    run.finish()?;
    if ds.periods.is_empty() {
        return Err(Failure::validation("no events in the data"));
    }
    if !report.is_valid() {
        return Err(Failure::validation(format!("{} violations", report.violations.len())));
    }
    println!("ingested {} events in {} periods", ds.n_events(), ds.periods.len());
    Ok(())
}

fn scope(cfg: &RunConfig) -> Result<NScope, Failure> {
    Ok(cfg.scope.as_deref().unwrap_or("zone").parse::<NScope>()?)
}

fn screened(cfg: &RunConfig, ds: &Dataset) -> Result<RuleSet, Failure> {
    let pc = count_pair_support(ds, cfg.window.unwrap_or(DEFAULT_WINDOW))?;
    Ok(select_rules(&pc, cfg.n.unwrap_or(DEFAULT_N), scope(cfg)?)?)
}

fn screen(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = load_valid(cfg)?;
    let rules = screened(cfg, &ds)?;
    let mut run = Run::new("screen", cfg)?;
    run.write("rules.csv", &rules.to_table())?;
    run.finish()?;
    println!("retained {} rules", rules.len());
    Ok(())
}

/// Everything `fit` stores besides the sample table.
#[derive(Debug, Serialize, Deserialize)]
struct StoredModel {
    spec: ModelSpec,
    /// Team ids in dense-index order.
    teams: BTreeMap<u32, String>,
    zone: Option<ZonePosterior>,
    fomc: Option<FomcPosterior>,
    msthp: Option<MsthpPosterior>,
}

const MODEL_FILE: &str = "model.json";
const SAMPLES_FILE: &str = "samples.csv";

fn fit(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed()?;
    let family: Family = cfg
        .model
        .as_deref()
        .ok_or_else(|| Failure::validation("fit needs --model"))?
        .parse()?;
    let ds = load_valid(cfg)?;
    let mut spec = ModelSpec::new(family, &ds);
    if let Some(p) = cfg.priors {
        p.validate()?;
        spec.priors = p;
    }
    if family.is_matrix() {
        let rules = match &cfg.rules {
            Some(_) => RuleSet::from_table(&read(&cfg.existing(&cfg.rules, "rules")?)?)?,
            None => screened(cfg, &ds)?,
        };
        spec = spec.with_rules(rules).with_tying(cfg.tying.unwrap_or(false));
    } else if cfg.tying == Some(true) {
        return Err(Failure::validation("home/away tying applies to mbeta and mbetaa only"));
    }
    spec.validate()?;
    let defaults = HmcConfig::default();
    let hmc = HmcConfig {
        chains: cfg.chains.unwrap_or(defaults.chains),
        warmup: cfg.warmup.unwrap_or(defaults.warmup),
        iters: cfg.iters.unwrap_or(defaults.iters),
        seed,
        ..defaults
    };
    if hmc.chains == 0 || hmc.iters == 0 {
        return Err(Failure::validation("chains and iters must be at least 1"));
    }
    let fitted = FittedModel::fit(&spec, &ds, &hmc)?;
    let mut run = Run::new("fit", cfg)?;
    run.write(SAMPLES_FILE, &fitted.samples.to_csv())?;
    run.write("summary.csv", &fitted.samples.summary_csv())?;
    run.write("posterior_mean.csv", &params_to_table(&spec, &fitted.posterior_mean())?)?;
    let stored = StoredModel {
        spec,
        teams: ds.teams.iter().map(|(k, v)| (k.0, v.clone())).collect(),
        zone: fitted.zone.clone(),
        fomc: fitted.fomc.clone(),
        msthp: fitted.msthp.clone(),
    };
    run.write_json(MODEL_FILE, &stored)?;
    run.finish()?;
    let worst = fitted
        .samples
        .summary()
        .iter()
        .filter_map(|r| r.rhat)
        .fold(f64::NAN, f64::max);
    println!(
        "{}: {} sampled parameters, {} free parameters, max R-hat {}",
        family.abbreviation(),
        fitted.layout.n_theta,
        fitted.n_free_params(),
        if worst.is_nan() { String::from("NA") } else { format!("{worst:.3}") }
    );
    Ok(())
}

struct Loaded {
    fitted: FittedModel,
    teams: BTreeMap<u32, String>,
}

fn load_fit(dir: &Path) -> Result<Loaded, Failure> {
    if !dir.is_dir() {
        return Err(Failure::validation(format!("fit directory {} does not exist", dir.display())));
    }
    let stored: StoredModel = serde_json::from_str(&read(&dir.join(MODEL_FILE))?)
        .map_err(|e| Failure::validation(format!("{}: {e}", dir.join(MODEL_FILE).display())))?;
    let samples = PosteriorSamples::from_csv(&read(&dir.join(SAMPLES_FILE))?)?;
    let fitted = FittedModel::from_parts(stored.spec, samples, stored.zone, stored.fomc, stored.msthp)?;
    Ok(Loaded {
        fitted,
        teams: stored.teams,
    })
}

/// Give `ds` the fitted model's team indexing, refusing unknown teams.
fn align_teams(ds: &mut Dataset, loaded: &Loaded) -> Result<(), Failure> {
    let spec = &loaded.fitted.spec;
    if ds.taxonomy != spec.taxonomy || ds.zones != spec.n_zones {
        return Err(Failure::validation("data taxonomy or zones differ from the fitted model"));
    }
    for t in ds.teams.keys() {
        if !loaded.teams.contains_key(&t.0) {
            return Err(Failure::validation(format!("team {} was not in the training data", t.0)));
        }
    }
    ds.teams = loaded.teams.iter().map(|(k, v)| (TeamId(*k), v.clone())).collect();
    Ok(())
}

fn fit_dirs(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    match &cfg.fits {
        Some(v) if !v.is_empty() => Ok(v.clone()),
        _ => Err(Failure::validation("missing --fits")),
    }
}

fn evaluate(cfg: &RunConfig) -> Result<(), Failure> {
    let dirs = fit_dirs(cfg)?;
    let test = load_valid(cfg)?;
    let r = cfg.draws.unwrap_or(DEFAULT_DRAWS);
    let seed = cfg.seed.unwrap_or(1);
    let mut reports: Vec<(LpdReport, String, ModelSpec)> = Vec::new();
    for (k, dir) in dirs.iter().enumerate() {
        let loaded = load_fit(dir)?;
        let mut ds = test.clone();
        align_teams(&mut ds, &loaded)?;
        let f = &loaded.fitted;
        let draws = f.draws(r, seed)?;
        let report = lpd(&ds, &f.spec, &draws, f.n_free_params())?;
        let name = format!("events_{}_{}.csv", k + 1, f.spec.family.cli_name());
        reports.push((report, name, f.spec.clone()));
    }
    let only: Vec<LpdReport> = reports.iter().map(|(r, _, _)| r.clone()).collect();
    let ranked = compare(&only)?;
    let mut run = Run::new("evaluate", cfg)?;
    run.write("ranking.csv", &ranking_csv(&ranked))?;
    for (report, name, spec) in &reports {
        run.write(name, &report.events_csv(spec))?;
    }
    run.finish()?;
    for r in ranked.iter().rev() {
        println!("{:>6} lpd {:.2}", r.abbreviation, r.total);
    }
    Ok(())
}

fn single_fit(cfg: &RunConfig) -> Result<Loaded, Failure> {
    let dirs = fit_dirs(cfg)?;
    if dirs.len() != 1 {
        return Err(Failure::validation("this command takes exactly one fit directory"));
    }
    load_fit(&dirs[0])
}

fn branch(cfg: &RunConfig) -> Result<(), Failure> {
    let loaded = single_fit(cfg)?;
    let mut ds = load_valid(cfg)?;
    align_teams(&mut ds, &loaded)?;
    let spec = &loaded.fitted.spec;
    let model = spec
        .excitation_model()?
        .ok_or_else(|| Failure::validation("branching needs an excitation model (sbeta, vbeta, mbeta, mbetaa)"))?;
    let mean = loaded.fitted.posterior_mean();
    let p = mean.excitation().expect("excitation family has excitation parameters");
    let tx = &spec.taxonomy;
    let mut out = String::from("game,period,event,mark,parent,parent_mark,probability\n");
    for period in &ds.periods {
        let teams = PeriodTeams::of(&ds, period)?;
        for i in 1..period.events.len() {
            let b = branching_probabilities(&model, p, period, i, teams)?;
            let mark = tx.label(period.events[i].mark);
            for (j, &v) in b.iter().enumerate().filter(|(_, v)| **v > 0.0) {
                let parent = if j == 0 { "background" } else { tx.label(period.events[j - 1].mark) };
                let _ = writeln!(out, "{},{},{i},{mark},{j},{parent},{v:.6e}", period.game_id, period.period_id);
            }
        }
    }
    let mut run = Run::new("branch", cfg)?;
    run.write("branching.csv", &out)?;
    run.finish()?;
    Ok(())
}

fn targets(cfg: &RunConfig, tx: &Taxonomy) -> Result<Vec<MarkId>, Failure> {
    let labels = cfg
        .target_marks
        .as_ref()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Failure::validation("missing --target-marks"))?;
    labels
        .iter()
        .map(|l| tx.id_of(l).ok_or_else(|| Failure::validation(format!("unknown mark label `{l}`"))))
        .collect()
}

fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed()?;
    let loaded = single_fit(cfg)?;
    let mut ds = load_valid(cfg)?;
    align_teams(&mut ds, &loaded)?;
    let spec = &loaded.fitted.spec;
    let tx = &spec.taxonomy;
    let targets = targets(cfg, tx)?;
    let defaults = SimConfig::default();
    let interval = cfg.interval.unwrap_or(defaults.interval);
    let k = cfg.ma_window.unwrap_or(DEFAULT_MA_WINDOW);
    let draws = loaded.fitted.draws(cfg.draws.unwrap_or(DEFAULT_DRAWS), seed)?;
    let model = spec.excitation_model()?;
    let horizon = |p: &flexpoint::event::GamePeriod| cfg.horizon.unwrap_or(p.t_end);

    // Interval indicators of every period, for the leave-one-out MA prior.
    let hits: Vec<(usize, usize)> = ds
        .periods
        .iter()
        .map(|p| {
            let n = (horizon(p) / interval).ceil() as usize;
            let on = (0..n)
                .filter(|&i| {
                    let (s, e) = (i as f64 * interval, (i + 1) as f64 * interval);
                    p.events[1..].iter().any(|ev| ev.t >= s && ev.t < e && targets.contains(&ev.mark))
                })
                .count();
            (on, n)
        })
        .collect();
    let (on_all, n_all) = hits.iter().fold((0, 0), |(a, b), (c, d)| (a + c, b + d));

    let series = ds
        .periods
        .par_iter()
        .enumerate()
        .map(|(i, period)| {
            let prior = match cfg.ma_prior {
                Some(v) => v,
                None if ds.periods.len() > 1 => {
                    let (on, n) = (on_all - hits[i].0, n_all - hits[i].1);
                    if n == 0 { 0.0 } else { on as f64 / n as f64 }
                }
                None => return Err(Failure::validation("a single period needs --ma-prior")),
            };
            let teams = PeriodTeams::of(&ds, period)?;
            let ctx = SimContext {
                spec,
                model: model.as_ref(),
                teams,
                home: period.home_team,
                away: period.away_team,
            };
            let sim = SimConfig {
                horizon: horizon(period),
                q: cfg.q.unwrap_or(defaults.q),
                seed: period_seed(seed, period.game_id, period.period_id),
                interval,
            };
            let s = interval_probabilities(&ctx, period, &draws, &targets, &sim)?.with_moving_average(k, prior)?;
            Ok((period.game_id, period.period_id, s))
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let mut run = Run::new("simulate", cfg)?;
    let mut auc = String::from("game,period,auc_model,auc_ma\n");
    for (g, p, s) in &series {
        run.write(&format!("forecast_g{g}_p{p}.csv"), &s.to_csv())?;
        let a = flexpoint::simulate::roc_auc(&s.p, &s.observed).ok();
        let b = flexpoint::simulate::roc_auc(&s.baseline, &s.observed).ok();
        let f = |x: Option<f64>| x.map_or(String::from("NA"), |v| format!("{v:.4}"));
        let _ = writeln!(auc, "{g},{p},{},{}", f(a), f(b));
    }
    run.write("auc.csv", &auc)?;
    run.finish()?;
    Ok(())
}

/// Distinct forecast seed per period so periods do not share rollouts.
fn period_seed(seed: u64, game: u64, period: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(game.to_le_bytes());
    h.update(period.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn diagnose(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = load_valid(cfg)?;
    let seed = cfg.seed.unwrap_or(1);
    let tx = &ds.taxonomy;
    let marks = match &cfg.target_marks {
        Some(v) if !v.is_empty() => targets(cfg, tx)?,
        _ => (0..tx.len()).map(MarkId::from_index).collect(),
    };
    let max_lag = cfg.max_lag.unwrap_or(60.0);
    let step = cfg.lag_step.unwrap_or(1.0);
    if !(max_lag > 0.0 && step > 0.0 && step <= max_lag) {
        return Err(Failure::validation("need 0 < lag step <= max lag"));
    }
    let grid: Vec<f64> = (1..=(max_lag / step).round() as usize).map(|i| i as f64 * step).collect();
    let reps = cfg.replicates.unwrap_or(DEFAULT_REPLICATES);

    let mut k_rows = Vec::new();
    let mut e_rows = Vec::new();
    let mut fits = String::from("game,period,events,poisson_rate,hawkes_mu,hawkes_eps,hawkes_beta,hawkes_loglik,gamma_shape,gamma_rate\n");
    for period in &ds.periods {
        let times: Vec<f64> = period.events.iter().filter(|e| marks.contains(&e.mark)).map(|e| e.t).collect();
        if times.len() < 3 {
            continue;
        }
        let tag = format!("g{}_p{}", period.game_id, period.period_id);
        let t_end = period.t_end;
        k_rows.push((format!("{tag}_data"), grid.clone(), k_function(&times, t_end, &grid)?));
        let rate = fit_poisson(&times, t_end)?;
        let hawkes = fit_hawkes1d(&times, t_end, HAWKES_STARTS)?;
        let (shape, grate) = fit_gamma_renewal(&times)?;
        let _ = writeln!(
            fits,
            "{},{},{},{rate},{},{},{},{},{shape},{grate}",
            period.game_id,
            period.period_id,
            times.len(),
            hawkes.params.mu,
            hawkes.params.eps,
            hawkes.params.beta,
            hawkes.loglik
        );
        let poisson = Hawkes1DParams {
            mu: rate,
            eps: 0.0,
            beta: 1.0,
        };
        for (name, p) in [("poisson", poisson), ("hawkes", hawkes.params)] {
            for r in 0..reps {
                let mut rng = derive_rng(seed, stream_id(period.game_id, period.period_id as u64, r as u64));
                let sim = hawkes1d_simulate(&p, t_end, &mut rng)?;
                if sim.len() >= 2 {
                    k_rows.push((format!("{tag}_{name}_{}", r + 1), grid.clone(), k_function(&sim, t_end, &grid)?));
                }
            }
        }
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let mut rng = derive_rng(seed, stream_id(period.game_id, period.period_id as u64, u64::MAX));
        let fitted: Vec<f64> = (0..gaps.len()).map(|_| gamma(shape, grate, &mut rng)).collect();
        e_rows.push((format!("{tag}_data"), ecdf(&gaps)?));
        e_rows.push((format!("{tag}_gamma"), ecdf(&fitted)?));
    }
    if k_rows.is_empty() {
        return Err(Failure::validation("no period has three or more selected events"));
    }
    let mut run = Run::new("diagnose", cfg)?;
    run.write("k_function.csv", &k_table_csv(&k_rows))?;
    run.write("ecdf.csv", &ecdf_csv(&e_rows))?;
    run.write("fits.csv", &fits)?;
    run.finish()?;
    Ok(())
}
