//! Dynamic fuel pricing as tabular Q-learning. The market is collapsed
//! into 72 discrete states (demand level × competitive position ×
//! daypart × weather) and the agent nudges the posted price by one cent
//! at most once an hour. Rewards blend realized fuel margin with a
//! retention signal so the learned policy balances today's margin
//! against the repeat business a sustained markup erodes.
//!
//! Training runs offline against the simulator; live runs only exploit
//! a frozen table (`GreedyPolicy`). Two static baselines are included
//! for uplift measurement.

use serde::{Deserialize, Serialize};

use crate::rng::Rng64;
use crate::sim::RetentionModel;
use crate::sim::{
    self, demand_rate, ExogenousState, FaultSpec, InventoryContext, InventoryDecider,
    PricingContext, PricingPolicy, SimError, Simulation, StationParams,
};
use crate::units::{Money, Price, Volume};

/// Number of discrete market states.
pub const N_STATES: usize = 72;
/// Price actions: down a cent, hold, up a cent.
pub const N_ACTIONS: usize = 3;

/// Competitive-position bucket width: 2 cents.
const COMP_DELTA_MILLS: i64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemandBucket {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompBucket {
    Cheaper,
    Par,
    Pricier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Daypart {
    Night,
    Morning,
    Midday,
    Evening,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeatherBucket {
    Mild,
    Adverse,
}

/// Discretized market state; indexes into the Q-table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriceState {
    pub demand: DemandBucket,
    pub comp: CompBucket,
    pub daypart: Daypart,
    pub weather: WeatherBucket,
}

impl PriceState {
    /// Dense index in [0, 72): demand varies slowest, weather fastest.
    pub fn index(&self) -> usize {
        let d = self.demand as usize;
        let c = self.comp as usize;
        let p = self.daypart as usize;
        let w = self.weather as usize;
        ((d * 3 + c) * 4 + p) * 2 + w
    }
}

/// Bucket the market context. Demand is judged against the *structural*
/// rate for this hour (base × daypart multiplier), so the bucket reads
/// "busy or quiet for this time of day", not the raw count.
pub fn discretize_state(
    raw_rate: f64,
    posted: Price,
    exo: &ExogenousState,
    params: &StationParams,
) -> PriceState {
    let structural =
        params.base_arrival_rate * params.daypart_multipliers[exo.hour_of_day as usize];
    let demand = if raw_rate < 0.67 * structural {
        DemandBucket::Low
    } else if raw_rate > 1.33 * structural {
        DemandBucket::High
    } else {
        DemandBucket::Medium
    };

    let delta = posted.mills() - exo.competitor_price.mills();
    let comp = if delta <= -COMP_DELTA_MILLS {
        CompBucket::Cheaper
    } else if delta >= COMP_DELTA_MILLS {
        CompBucket::Pricier
    } else {
        CompBucket::Par
    };

    let daypart = match exo.hour_of_day {
        6..=10 => Daypart::Morning,
        11..=16 => Daypart::Midday,
        17..=21 => Daypart::Evening,
        _ => Daypart::Night,
    };

    let weather = if exo.weather_index() >= 0.5 {
        WeatherBucket::Adverse
    } else {
        WeatherBucket::Mild
    };

    PriceState {
        demand,
        comp,
        daypart,
        weather,
    }
}

/// One-cent price moves, ordered so ties break toward cutting price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceAction {
    Down,
    Hold,
    Up,
}

impl PriceAction {
    pub const ALL: [PriceAction; 3] = [PriceAction::Down, PriceAction::Hold, PriceAction::Up];

    pub fn delta_mills(self) -> i64 {
        match self {
            PriceAction::Down => -10,
            PriceAction::Hold => 0,
            PriceAction::Up => 10,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> PriceAction {
        Self::ALL[i]
    }
}

/// Reward blend: margin dollars, gallons, and the retention delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_revenue: f64,
    pub w_volume: f64,
    pub w_retention: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_revenue: 1.0,
            w_volume: 0.0,
            w_retention: 5.0,
        }
    }
}

/// Scalar reward for one hour. `margin` must already be net of the
/// wholesale cost of the gallons sold (gross revenue would teach the
/// agent to sell below cost); the episode log tracks both sides exactly.
pub fn reward(
    margin: Money,
    volume: Volume,
    retention_delta: f64,
    weights: &RewardWeights,
) -> f64 {
    weights.w_revenue * margin.as_dollars()
        + weights.w_volume * volume.as_gallons()
        + weights.w_retention * retention_delta
}

/// Q-learning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearnParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε decays linearly from start to end.
    pub epsilon_decay_episodes: u32,
    pub episodes: u32,
    /// Simulated days per training episode.
    pub episode_days: u32,
    pub reward_weights: RewardWeights,
}

impl Default for QLearnParams {
    fn default() -> Self {
        QLearnParams {
            alpha: 0.1,
            // A 0.95 discount looks roughly a day ahead, far enough to see
            // that drifting deep above the competitor erodes tomorrow's
            // margin.  Shorter horizons ratchet the price upward (the flat
            // local margin curve hides the long-run cost); much longer ones
            // over-weight retention and underprice.
            gamma: 0.95,
            epsilon_start: 0.3,
            epsilon_end: 0.01,
            epsilon_decay_episodes: 240, // 80% of the default run
            episodes: 300,
            episode_days: 30,
            reward_weights: RewardWeights::default(),
        }
    }
}

impl QLearnParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &'static str, reason: &str| {
            Err(SimError::InvalidParam {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("pricing.alpha", "must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("pricing.gamma", "must be in [0, 1)");
        }
        for (field, v) in [
            ("pricing.epsilon_start", self.epsilon_start),
            ("pricing.epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, "must be in [0, 1]");
            }
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("pricing.epsilon_end", "must not exceed epsilon_start");
        }
        if self.episode_days == 0 {
            return bad("pricing.episode_days", "must be at least 1");
        }
        let w = &self.reward_weights;
        if w.w_revenue < 0.0 || w.w_volume < 0.0 || w.w_retention < 0.0 {
            return bad("pricing.reward_weights", "must be non-negative");
        }
        Ok(())
    }

    /// ε for a given zero-based episode: linear decay, then flat.
    pub fn epsilon_at(&self, episode: u32) -> f64 {
        if self.epsilon_decay_episodes == 0 || episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Action-value table over the 72 market states.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    visits: Vec<u32>,
}

impl Default for QTable {
    fn default() -> Self {
        Self::new()
    }
}

impl QTable {
    pub fn new() -> Self {
        QTable {
            values: vec![0.0; N_STATES * N_ACTIONS],
            visits: vec![0; N_STATES * N_ACTIONS],
        }
    }

    pub fn q(&self, s: usize, a: PriceAction) -> f64 {
        self.values[s * N_ACTIONS + a.index()]
    }

    pub fn visits(&self, s: usize, a: PriceAction) -> u32 {
        self.visits[s * N_ACTIONS + a.index()]
    }

    pub fn max_q(&self, s: usize) -> f64 {
        let row = &self.values[s * N_ACTIONS..(s + 1) * N_ACTIONS];
        row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Greedy action; ties break toward the lowest index (price cut).
    pub fn greedy(&self, s: usize) -> PriceAction {
        let row = &self.values[s * N_ACTIONS..(s + 1) * N_ACTIONS];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        PriceAction::from_index(best)
    }

    /// Temporal-difference update toward r + γ·max_a' Q(s', a').
    pub fn q_update(
        &mut self,
        s: usize,
        a: PriceAction,
        r: f64,
        s_next: usize,
        alpha: f64,
        gamma: f64,
    ) {
        let target = r + gamma * self.max_q(s_next);
        let cell = &mut self.values[s * N_ACTIONS + a.index()];
        *cell += alpha * (target - *cell);
        self.visits[s * N_ACTIONS + a.index()] += 1;
    }

    /// ε-greedy action selection.
    pub fn select_action(&self, s: usize, epsilon: f64, rng: &mut Rng64) -> PriceAction {
        if epsilon > 0.0 && rng.next_f64() < epsilon {
            PriceAction::from_index(rng.next_below(N_ACTIONS as u64) as usize)
        } else {
            self.greedy(s)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV snapshot: one row per state with action values and visit counts.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("state_index,q_down,q_hold,q_up,visits_down,visits_hold,visits_up\n");
        for s in 0..N_STATES {
            let v = &self.values[s * N_ACTIONS..(s + 1) * N_ACTIONS];
            let n = &self.visits[s * N_ACTIONS..(s + 1) * N_ACTIONS];
            out.push_str(&format!(
                "{s},{},{},{},{},{},{}\n",
                v[0], v[1], v[2], n[0], n[1], n[2]
            ));
        }
        out
    }
}

/// Exploits a frozen Q-table: reads the market, applies the greedy
/// one-cent move to the standing price.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    table: QTable,
}

impl GreedyPolicy {
    pub fn new(table: QTable) -> Self {
        GreedyPolicy { table }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }
}

impl PricingPolicy for GreedyPolicy {
    fn post_price(&mut self, ctx: &PricingContext<'_>) -> Price {
        let rate = demand_rate(ctx.prev_posted, ctx.exo, ctx.params);
        let s = discretize_state(rate, ctx.prev_posted, ctx.exo, ctx.params).index();
        let a = self.table.greedy(s);
        Price(ctx.prev_posted.mills() + a.delta_mills())
    }
}

/// Posts wholesale cost plus a fixed margin, ignoring the market.
#[derive(Debug, Clone, Copy)]
pub struct FixedMarginPolicy {
    pub margin: Price,
}

impl Default for FixedMarginPolicy {
    fn default() -> Self {
        FixedMarginPolicy { margin: Price(250) }
    }
}

impl PricingPolicy for FixedMarginPolicy {
    fn post_price(&mut self, ctx: &PricingContext<'_>) -> Price {
        Price(ctx.exo.wholesale_cost.mills() + self.margin.mills())
    }
}

/// Mirrors the competitor's posted price exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompetitorMatchPolicy;

impl PricingPolicy for CompetitorMatchPolicy {
    fn post_price(&mut self, ctx: &PricingContext<'_>) -> Price {
        ctx.exo.competitor_price
    }
}

/// Static strategies the trained policy is benchmarked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FixedMargin,
    CompetitorMatch,
}

pub fn baseline_policy(kind: BaselineKind) -> Box<dyn PricingPolicy> {
    match kind {
        BaselineKind::FixedMargin => Box::new(FixedMarginPolicy::default()),
        BaselineKind::CompetitorMatch => Box::new(CompetitorMatchPolicy),
    }
}

/// One point on the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPoint {
    pub episode: u32,
    pub total_reward: f64,
    pub epsilon: f64,
}

/// Training curve CSV (`episode,total_reward,epsilon`).
pub fn curve_to_csv(curve: &[TrainPoint]) -> String {
    let mut out = String::from("episode,total_reward,epsilon\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.episode, p.total_reward, p.epsilon));
    }
    out
}

/// Keeps the tank comfortably full during training so stockouts never
/// contaminate the pricing reward.
struct TrainingKeeper;

impl InventoryDecider for TrainingKeeper {
    fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume> {
        let target = Volume((ctx.params.tank_capacity.mgal() * 4) / 5);
        let deficit = target - ctx.tank_level;
        (deficit.mgal() > 0).then_some(deficit)
    }
}

/// Train a pricing table: `episodes` fresh simulated runs, ε-greedy
/// exploration with the linear schedule, TD updates after every hour.
/// Deterministic in (params, qp, seed).
pub fn train_policy(
    params: &StationParams,
    qp: &QLearnParams,
    seed: u64,
) -> Result<(QTable, Vec<TrainPoint>), SimError> {
    params.validate()?;
    qp.validate()?;

    let mut table = QTable::new();
    let mut curve = Vec::with_capacity(qp.episodes as usize);
    let horizon = qp.episode_days * 24;

    for ep in 0..qp.episodes {
        let epsilon = qp.epsilon_at(ep);
        let ep_seed = Rng64::substream(seed, sim::tag::EPISODE, ep as u64).next_u64();
        let mut explore = Rng64::substream(seed, sim::tag::EXPLORE, ep as u64);
        let mut sim = Simulation::new(params, ep_seed, &[])?;
        let mut keeper = TrainingKeeper;
        let mut retention = RetentionModel::new();
        let mut total_reward = 0.0;

        for h in 0..horizon {
            if h % 24 == 0 && sim.pending_volume().is_zero() {
                let ctx = InventoryContext {
                    hour: h,
                    tank_level: sim.tank_level(),
                    log: sim.log(),
                    params,
                };
                if let Some(qty) = keeper.decide(&ctx) {
                    sim.place_order(qty);
                }
            }

            let prev = sim.prev_posted();
            let exo = *sim.exo();
            let rate = demand_rate(prev, &exo, params);
            let s = discretize_state(rate, prev, &exo, params).index();
            let a = table.select_action(s, epsilon, &mut explore);

            let rec = sim.step_hour(Price(prev.mills() + a.delta_mills()));
            let margin = rec.fuel_revenue - rec.fuel_cost;
            let volume = rec.gallons_sold;
            let gap = (rec.posted_price - rec.exo.competitor_price).as_dollars();
            let posted = rec.posted_price;
            let retention_delta = retention.observe(gap);
            let r = reward(margin, volume, retention_delta, &qp.reward_weights);
            total_reward += r;

            let exo_next = *sim.exo();
            let rate_next = demand_rate(posted, &exo_next, params);
            let s_next = discretize_state(rate_next, posted, &exo_next, params).index();
            table.q_update(s, a, r, s_next, qp.alpha, qp.gamma);
        }

        curve.push(TrainPoint {
            episode: ep,
            total_reward,
            epsilon,
        });
    }

    debug_assert!(table.is_finite());
    Ok((table, curve))
}

/// Run one evaluation episode under a given policy and report the fuel
/// margin (pump revenue net of wholesale cost). Shop margin is excluded:
/// it is insensitive to the posted price except through visit counts, and
/// including it would let attach-rate noise mask real pricing differences.
/// Shared by the uplift bench.
pub fn evaluate_policy(
    params: &StationParams,
    policy: &mut dyn PricingPolicy,
    inventory: &mut dyn InventoryDecider,
    seed: u64,
    faults: &[FaultSpec],
    horizon_hours: u32,
) -> Result<(Money, sim::EpisodeLog), SimError> {
    let log = sim::run_episode(params, seed, faults, 0, policy, inventory, horizon_hours)?;
    let margin: Money = log.hours.iter().map(|h| h.fuel_revenue - h.fuel_cost).sum();
    Ok((margin, log))
}
