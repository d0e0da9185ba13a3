//! Forward simulation, interval forecasts, moving-average baselines and
//! ROC analysis.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::event::{Event, GamePeriod, MarkId, Side, TeamId, ZoneId};
use crate::inference::{MarkParams, ModelParams, ModelSpec};
use crate::marks::{excitation_weights, ExcitationModel, ExcitationParams, Family, PeriodTeams};
use crate::random::{self, derive_rng, stream_id, SimRng};
use crate::zone_model::{sample_zone, ZoneState};

/// Everything about a period that simulation needs besides parameters.
#[derive(Debug, Clone)]
pub struct SimContext<'a> {
    pub spec: &'a ModelSpec,
    pub model: Option<&'a ExcitationModel>,
    pub teams: PeriodTeams,
    pub home: TeamId,
    pub away: TeamId,
}

impl SimContext<'_> {
    fn team(&self, m: usize) -> TeamId {
        match self.spec.taxonomy.side(MarkId::from_index(m)) {
            Side::Home => self.home,
            Side::Away => self.away,
        }
    }
}

/// What the mark pmf needs to know about the past.
#[derive(Debug, Clone)]
enum Memory {
    /// Per-source decayed counts `Σ e^{−β_s (t_state − t_j)}` (Sβ/Vβ).
    Stream { t: f64, k: Vec<f64> },
    /// The most recent events (Mβ/MβA keep `W`).
    Recent(Vec<Event>),
    /// Only the last event matters.
    Last,
}

/// Simulation state after a sequence of events.
#[derive(Debug, Clone)]
pub struct Filtration {
    memory: Memory,
    last: Event,
}

fn decay(model: &ExcitationModel, p: &ExcitationParams<f64>, s: usize) -> f64 {
    if model.family == Family::SBeta {
        p.decay[0]
    } else {
        p.decay[s]
    }
}

impl Filtration {
    /// State after `history`, which must be non-empty.
    pub fn new(ctx: &SimContext, p: &ModelParams<f64>, history: &[Event]) -> Result<Self> {
        let last = *history
            .last()
            .ok_or_else(|| invalid("simulation needs at least one conditioning event"))?;
        let memory = match (ctx.model, p.excitation()) {
            (Some(em), Some(e)) if !em.family.is_matrix() => {
                let mut k = vec![0.0; em.n_marks];
                for h in history {
                    let s = h.mark.index();
                    k[s] += (-decay(em, e, s) * (last.t - h.t)).exp();
                }
                Memory::Stream { t: last.t, k }
            }
            (Some(em), Some(_)) => {
                let w = em.window.unwrap_or(usize::MAX);
                Memory::Recent(history[history.len().saturating_sub(w)..].to_vec())
            }
            _ => Memory::Last,
        };
        Ok(Filtration { memory, last })
    }

    /// The most recent event seen.
    pub fn last(&self) -> Event {
        self.last
    }

    /// Append an event that happened after the current state.
    pub fn observe(&mut self, ctx: &SimContext, p: &ModelParams<f64>, e: Event) {
        self.push(ctx, p, e)
    }

    /// Log-probability of `mark` for an event at (`t`, `zone`).
    pub fn mark_log_prob(
        &self,
        ctx: &SimContext,
        p: &ModelParams<f64>,
        t: f64,
        zone: usize,
        mark: usize,
    ) -> Result<f64> {
        match (&self.memory, &p.marks) {
            (Memory::Stream { t: ts, k }, Some(MarkParams::Excitation(e))) => {
                let em = ctx.model.expect("excitation");
                let m = em.n_marks;
                let ea = e.alpha.exp();
                let (mut num, mut total) = (e.delta[mark], 0.0);
                for s in 0..m {
                    if k[s] == 0.0 {
                        continue;
                    }
                    let ks = ea * k[s] * (-decay(em, e, s) * (t - ts)).exp();
                    total += ks;
                    num += ks * e.conversion[s * m + mark];
                }
                Ok(num.ln() - total.ln_1p())
            }
            _ => Ok(self.mark_pmf(ctx, p, t, zone)?[mark].ln()),
        }
    }

    fn push(&mut self, ctx: &SimContext, p: &ModelParams<f64>, e: Event) {
        match &mut self.memory {
            Memory::Stream { t, k } => {
                let (em, ex) = (ctx.model.expect("excitation"), p.excitation().expect("excitation"));
                for (s, v) in k.iter_mut().enumerate() {
                    *v *= (-decay(em, ex, s) * (e.t - *t)).exp();
                }
                k[e.mark.index()] += 1.0;
                *t = e.t;
            }
            Memory::Recent(v) => {
                let w = ctx.model.and_then(|m| m.window).unwrap_or(usize::MAX);
                v.push(e);
                if v.len() > w {
                    v.remove(0);
                }
            }
            Memory::Last => {}
        }
        self.last = e;
    }

    /// Mark pmf for an event at (`t`, `zone`).
    fn mark_pmf(&self, ctx: &SimContext, p: &ModelParams<f64>, t: f64, zone: usize) -> Result<Vec<f64>> {
        match (&self.memory, &p.marks) {
            (Memory::Stream { t: ts, k }, Some(MarkParams::Excitation(e))) => {
                let em = ctx.model.expect("excitation");
                let m = em.n_marks;
                let ea = e.alpha.exp();
                let mut num = e.delta.clone();
                let mut total = 0.0;
                for s in 0..m {
                    if k[s] == 0.0 {
                        continue;
                    }
                    let ks = ea * k[s] * (-decay(em, e, s) * (t - ts)).exp();
                    total += ks;
                    for (n, g) in num.iter_mut().zip(&e.conversion[s * m..(s + 1) * m]) {
                        *n += ks * g;
                    }
                }
                Ok(num.into_iter().map(|x| x / (1.0 + total)).collect())
            }
            (Memory::Recent(hist), Some(MarkParams::Excitation(e))) => {
                let em = ctx.model.expect("excitation");
                let w = excitation_weights(em, e, hist, t, zone, ctx.teams)?;
                let row = em.delta_row(e, zone);
                let num: Vec<f64> = row.iter().zip(&w.w).map(|(d, x)| d + x).collect();
                let den: f64 = num.iter().sum();
                Ok(num.into_iter().map(|x| x / den).collect())
            }
            (_, Some(MarkParams::Fomc(f))) => Ok(f.row(zone, self.last.mark.index()).to_vec()),
            _ => Err(invalid("parameters lack a mark model")),
        }
    }
}

/// Draw a Gamma gap conditioned on exceeding `min_gap`.
fn gap<R: Rng + ?Sized>(shape: f64, rate: f64, min_gap: f64, rng: &mut R) -> f64 {
    if min_gap <= 0.0 {
        return random::gamma(shape, rate, rng);
    }
    for _ in 0..10_000 {
        let g = random::gamma(shape, rate, rng);
        if g > min_gap {
            return g;
        }
    }
    // Far in the tail the residual wait is close to exponential with the
    // Gamma's limiting hazard.
    min_gap + random::gamma(1.0, rate, rng)
}

/// Simulate events in `(start, start + horizon]` after `filtration`,
/// given that none occurred between the last conditioning event and `start`.
pub fn simulate_forward(
    ctx: &SimContext,
    p: &ModelParams<f64>,
    filtration: &Filtration,
    start: f64,
    horizon: f64,
    rng: &mut SimRng,
) -> Result<Vec<Event>> {
    simulate_until(ctx, p, filtration, start, horizon, rng, &|_| false)
}

/// As [`simulate_forward`], stopping after the first event for which
/// `stop` holds.
pub fn simulate_until(
    ctx: &SimContext,
    p: &ModelParams<f64>,
    filtration: &Filtration,
    start: f64,
    horizon: f64,
    rng: &mut SimRng,
    stop: &dyn Fn(&Event) -> bool,
) -> Result<Vec<Event>> {
    if !(horizon >= 0.0) {
        return Err(invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    let end = start + horizon;
    let mut out = Vec::new();
    if horizon == 0.0 {
        return Ok(out);
    }
    let mut f = filtration.clone();
    if let Some(MarkParams::Msthp(q)) = &p.marks {
        let total = q.total_rate();
        if !(total > 0.0) {
            return Ok(out);
        }
        let mut t = start.max(f.last.t);
        loop {
            t += random::gamma(1.0, total, rng);
            if t > end {
                return Ok(out);
            }
            let cell = random::categorical(&q.rho, rng);
            let (z, m) = (cell / q.n_marks, cell % q.n_marks);
            let e = Event {
                t,
                zone: ZoneId::from_index(z),
                mark: MarkId::from_index(m),
                team: ctx.team(m),
            };
            out.push(e);
            if stop(&e) {
                return Ok(out);
            }
        }
    }
    let time = p.time.as_ref().ok_or_else(|| invalid("parameters lack the time block"))?;
    let zones = p.zone.as_ref().ok_or_else(|| invalid("parameters lack the zone block"))?;
    time.validate()?;
    let mut first = true;
    loop {
        let prev = f.last;
        let k = prev.mark.index();
        let min_gap = if first { start - prev.t } else { 0.0 };
        first = false;
        let dt = gap(time.shape[k], time.rate[k], min_gap, rng);
        let t = prev.t + dt;
        if !(t > prev.t) {
            continue;
        }
        if t > end {
            return Ok(out);
        }
        let zone = sample_zone(
            ZoneState {
                zone: prev.zone,
                mark: prev.mark,
            },
            zones,
            rng,
        )?;
        let pmf = f.mark_pmf(ctx, p, t, zone.index())?;
        if pmf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { block: "mark pmf".into() });
        }
        let m = random::categorical(&pmf, rng);
        let e = Event {
            t,
            zone,
            mark: MarkId::from_index(m),
            team: ctx.team(m),
        };
        out.push(e);
        if stop(&e) {
            return Ok(out);
        }
        f.push(ctx, p, e);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Length of the forecast period in seconds.
    pub horizon: f64,
    /// Rollouts per posterior draw.
    pub q: usize,
    pub seed: u64,
    /// Interval length in seconds.
    pub interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 45.0 * 60.0,
            q: 100,
            seed: 1,
            interval: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub start: Vec<f64>,
    /// Share of rollouts with at least one target event in the interval.
    pub p: Vec<f64>,
    pub observed: Vec<bool>,
    /// Baseline probabilities, filled by [`PredictionSeries::with_moving_average`].
    pub baseline: Vec<f64>,
}

impl PredictionSeries {
    pub fn with_moving_average(mut self, k: usize, prior: f64) -> Result<Self> {
        self.baseline = moving_average_baseline(&self.observed, k, prior)?;
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("interval,start_s,p_model,p_ma,observed\n");
        for i in 0..self.p.len() {
            let ma = self.baseline.get(i).map_or(String::from("NA"), |v| format!("{v:.6}"));
            s.push_str(&format!(
                "{},{},{:.6},{},{}\n",
                i + 1,
                self.start[i],
                self.p[i],
                ma,
                self.observed[i] as u8
            ));
        }
        s
    }
}

/// Per-interval probability of at least one target event, each interval
/// conditioned on the real events before it. The period's first event
/// always conditions.
pub fn interval_probabilities(
    ctx: &SimContext,
    period: &GamePeriod,
    draws: &[ModelParams<f64>],
    targets: &[MarkId],
    cfg: &SimConfig,
) -> Result<PredictionSeries> {
    if draws.is_empty() || cfg.q == 0 {
        return Err(invalid("need at least one draw and one rollout"));
    }
    if !(cfg.interval > 0.0 && cfg.horizon > 0.0) {
        return Err(invalid("interval and horizon must be positive"));
    }
    if period.events.is_empty() {
        return Err(invalid("period has no events"));
    }
    let is_target = |m: MarkId| targets.contains(&m);
    let n_int = (cfg.horizon / cfg.interval).ceil() as usize;
    let mut series = PredictionSeries {
        start: Vec::with_capacity(n_int),
        p: Vec::with_capacity(n_int),
        observed: Vec::with_capacity(n_int),
        baseline: Vec::new(),
    };
    for k in 0..n_int {
        let s = k as f64 * cfg.interval;
        let e = (s + cfg.interval).min(cfg.horizon);
        let n_hist = 1 + period.events[1..].iter().take_while(|ev| ev.t < s).count();
        let history = &period.events[..n_hist];
        let observed = period.events[1..]
            .iter()
            .any(|ev| ev.t >= s && ev.t < e && is_target(ev.mark));
        let mut hits = 0usize;
        for (r, p) in draws.iter().enumerate() {
            let filt = Filtration::new(ctx, p, history)?;
            let start = s.max(filt.last.t);
            for q in 0..cfg.q {
                let mut rng = derive_rng(cfg.seed, stream_id(k as u64, r as u64, q as u64));
                let sim = simulate_until(ctx, p, &filt, start, e - start, &mut rng, &|ev| is_target(ev.mark))?;
                if sim.iter().any(|ev| is_target(ev.mark)) {
                    hits += 1;
                }
            }
        }
        series.start.push(s);
        series.p.push(hits as f64 / (draws.len() * cfg.q) as f64);
        series.observed.push(observed);
    }
    Ok(series)
}

/// `p(i)` is the mean of the previous `min(k, i)` indicators; `p(0) = prior`.
pub fn moving_average_baseline(observed: &[bool], k: usize, prior: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid("moving average needs k ≥ 1"));
    }
    Ok((0..observed.len())
        .map(|i| {
            if i == 0 {
                prior
            } else {
                let w = &observed[i - k.min(i)..i];
                w.iter().filter(|&&o| o).count() as f64 / w.len() as f64
            }
        })
        .collect())
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counting half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("ROC analysis needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tied groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if labels[o] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
