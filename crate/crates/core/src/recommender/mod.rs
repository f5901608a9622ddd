//! Cross-sell recommendations from shop purchase history.
//!
//! The store's baskets form a sparse user × item interaction matrix; this
//! module factorizes it into low-rank user and item factors with plain SGD
//! and ranks unpurchased items for each customer by predicted affinity.
//! Ratings are log-scaled purchase counts — implicit feedback, so only
//! observed (purchased) pairs are trained; an unpurchased item is *unknown*,
//! not a zero.
//!
//! Everything here is deterministic given the RNG handed in: factor
//! initialization and the per-epoch visit order both draw from it, so a
//! seed pins the trained model exactly.

use crate::rng::Rng64;
use crate::sim::{CustomerVisit, EpisodeLog, N_ITEMS};
use thiserror::Error;

/// Latent dimension used when the scenario doesn't override it.
pub const DEFAULT_LATENT_DIM: usize = 8;
/// L2 regularization strength default.
pub const DEFAULT_REG_LAMBDA: f64 = 0.05;
/// SGD step size default.
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
/// Training epochs default.
pub const DEFAULT_EPOCHS: u32 = 200;

/// Training aborts when the epoch loss exceeds this or goes non-finite.
const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum RecommendError {
    #[error("interaction matrix has no observed entries")]
    EmptyInteractions,
    #[error("duplicate interaction for user {user}, item {item}")]
    DuplicatePair { user: u32, item: u16 },
    #[error("rating for user {user}, item {item} must be finite and >= 0, got {rating}")]
    InvalidRating { user: u32, item: u16, rating: f64 },
    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{field}: {reason}")]
    InvalidParam {
        field: &'static str,
        reason: &'static str,
    },
    #[error("training diverged at epoch {epoch}: loss {loss:.3e}")]
    Diverged { epoch: u32, loss: f64 },
    #[error("holdout set is empty")]
    EmptyHoldout,
}

type Result<T> = std::result::Result<T, RecommendError>;

/// One observed user–item affinity. `rating` is ln(1 + purchase count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u16,
    pub rating: f64,
}

/// Sparse user × item purchase-affinity matrix. Presence of an entry is
/// the observation mask: pairs that never co-occurred are absent, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Interaction>,
}

impl InteractionMatrix {
    /// Build from raw purchase counts. Zero counts are dropped (an item
    /// never bought is unobserved); duplicates and out-of-range ids are
    /// rejected rather than merged so callers notice tallying bugs.
    pub fn from_counts(
        n_users: usize,
        n_items: usize,
        counts: &[(u32, u16, u32)],
    ) -> Result<InteractionMatrix> {
        let mut seen = vec![false; n_users * n_items];
        let mut entries = Vec::with_capacity(counts.len());
        for &(user, item, count) in counts {
            if user as usize >= n_users {
                return Err(RecommendError::IndexOutOfRange {
                    what: "user",
                    index: user as usize,
                    len: n_users,
                });
            }
            if item as usize >= n_items {
                return Err(RecommendError::IndexOutOfRange {
                    what: "item",
                    index: item as usize,
                    len: n_items,
                });
            }
            let slot = user as usize * n_items + item as usize;
            if seen[slot] {
                return Err(RecommendError::DuplicatePair { user, item });
            }
            seen[slot] = true;
            if count == 0 {
                continue;
            }
            entries.push(Interaction {
                user,
                item,
                rating: (1.0 + count as f64).ln(),
            });
        }
        Ok(InteractionMatrix {
            n_users,
            n_items,
            entries,
        })
    }

    /// Tally every basket in an episode log. The user population is sized
    /// by the largest id seen (the log is self-describing, so a log-only
    /// workflow needs no scenario parameters); items are the fixed catalog.
    pub fn from_episode(log: &EpisodeLog) -> InteractionMatrix {
        Self::from_visits(&log.visits)
    }

    /// Tally baskets from an explicit visit list (the telemetry replay path).
    pub fn from_visits(visits: &[CustomerVisit]) -> InteractionMatrix {
        let n_users = visits
            .iter()
            .map(|v| v.user_id as usize + 1)
            .max()
            .unwrap_or(0);
        let mut counts = vec![0u32; n_users * N_ITEMS];
        for v in visits {
            for &item in &v.basket {
                counts[v.user_id as usize * N_ITEMS + item as usize] += 1;
            }
        }
        let entries = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(slot, &c)| Interaction {
                user: (slot / N_ITEMS) as u32,
                item: (slot % N_ITEMS) as u16,
                rating: (1.0 + c as f64).ln(),
            })
            .collect();
        InteractionMatrix {
            n_users,
            n_items: N_ITEMS,
            entries,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn entries(&self) -> &[Interaction] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean observed rating — the no-model baseline predictor.
    pub fn global_mean(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.rating).sum::<f64>() / self.entries.len() as f64
    }

    /// Split off roughly `fraction` of the entries as a holdout set, chosen
    /// by a seeded shuffle so the split is reproducible. Returns
    /// (training matrix, holdout entries).
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (InteractionMatrix, Vec<Interaction>) {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        let mut rng = Rng64::new(seed);
        for i in (1..order.len()).rev() {
            let j = rng.next_below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        let n_hold = (self.entries.len() as f64 * fraction.clamp(0.0, 1.0)).round() as usize;
        let holdout: Vec<Interaction> = order[..n_hold].iter().map(|&i| self.entries[i]).collect();
        let mut train: Vec<Interaction> = order[n_hold..].iter().map(|&i| self.entries[i]).collect();
        train.sort_by_key(|e| (e.user, e.item));
        (
            InteractionMatrix {
                n_users: self.n_users,
                n_items: self.n_items,
                entries: train,
            },
            holdout,
        )
    }

    /// Items a user has purchased (for excluding from recommendations).
    pub fn purchased_by(&self, user: u32) -> Vec<u16> {
        self.entries
            .iter()
            .filter(|e| e.user == user)
            .map(|e| e.item)
            .collect()
    }
}

/// Low-rank factor pair: each user and each item gets a length-`k` vector,
/// and predicted affinity is their dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    k: usize,
    n_users: usize,
    n_items: usize,
    /// Row-major n_users × k.
    u: Vec<f64>,
    /// Row-major n_items × k.
    v: Vec<f64>,
}

impl LatentFactors {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn user_factor(&self, user: usize) -> &[f64] {
        &self.u[user * self.k..(user + 1) * self.k]
    }

    pub fn item_factor(&self, item: usize) -> &[f64] {
        &self.v[item * self.k..(item + 1) * self.k]
    }

    /// Predicted affinity of `user` for `item`: U_user · V_item.
    pub fn predict_rating(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users {
            return Err(RecommendError::IndexOutOfRange {
                what: "user",
                index: user,
                len: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(RecommendError::IndexOutOfRange {
                what: "item",
                index: item,
                len: self.n_items,
            });
        }
        Ok(dot(self.user_factor(user), self.item_factor(item)))
    }

    /// Largest Euclidean row norm across both factor matrices.
    pub fn max_row_norm(&self) -> f64 {
        let norm = |row: &[f64]| dot(row, row).sqrt();
        let users = (0..self.n_users).map(|i| norm(self.user_factor(i)));
        let items = (0..self.n_items).map(|j| norm(self.item_factor(j)));
        users.chain(items).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fresh factors with entries uniform in [−0.1, 0.1]. Small symmetric
/// initialization keeps early predictions near zero so the first SGD steps
/// are driven by the data, not the starting point.
pub fn init_factors(n_users: usize, n_items: usize, k: usize, rng: &mut Rng64) -> Result<LatentFactors> {
    if n_users == 0 {
        return Err(RecommendError::InvalidParam {
            field: "recommender.n_users",
            reason: "must be >= 1",
        });
    }
    if n_items == 0 {
        return Err(RecommendError::InvalidParam {
            field: "recommender.n_items",
            reason: "must be >= 1",
        });
    }
    if k == 0 {
        return Err(RecommendError::InvalidParam {
            field: "recommender.latent_dim",
            reason: "must be >= 1",
        });
    }
    let mut draw = |n: usize| (0..n).map(|_| rng.next_f64() * 0.2 - 0.1).collect();
    Ok(LatentFactors {
        k,
        n_users,
        n_items,
        u: draw(n_users * k),
        v: draw(n_items * k),
    })
}

/// Full training objective: Σ (r − U_i·V_j)² over observed entries plus
/// λ(Σ‖U_i‖² + Σ‖V_j‖²) over every row. This is the quantity the per-epoch
/// loss curve reports and the divergence guard watches.
pub fn training_loss(matrix: &InteractionMatrix, factors: &LatentFactors, reg_lambda: f64) -> f64 {
    let mut sse = 0.0;
    for e in &matrix.entries {
        let err = e.rating - dot(
            factors.user_factor(e.user as usize),
            factors.item_factor(e.item as usize),
        );
        sse += err * err;
    }
    let reg: f64 = factors.u.iter().chain(factors.v.iter()).map(|x| x * x).sum();
    sse + reg_lambda * reg
}

/// Factorize by stochastic gradient descent. Each epoch walks the observed
/// entries in a freshly shuffled (seeded) order; for an entry with error
/// e = r − U_i·V_j the update is
///
///   U_i += lr · (e·V_j − λ·U_i)
///   V_j += lr · (e·U_i − λ·V_j)
///
/// Returns the trained factors and the objective after each epoch. Training
/// aborts with a divergence error (naming the epoch) if the objective blows
/// past 1e12 or goes non-finite — the usual symptom of an oversized step.
pub fn train_mf(
    matrix: &InteractionMatrix,
    k: usize,
    reg_lambda: f64,
    learning_rate: f64,
    epochs: u32,
    rng: &mut Rng64,
) -> Result<(LatentFactors, Vec<f64>)> {
    if matrix.is_empty() {
        return Err(RecommendError::EmptyInteractions);
    }
    if !(reg_lambda >= 0.0 && reg_lambda.is_finite()) {
        return Err(RecommendError::InvalidParam {
            field: "recommender.reg_lambda",
            reason: "must be finite and >= 0",
        });
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(RecommendError::InvalidParam {
            field: "recommender.learning_rate",
            reason: "must be finite and > 0",
        });
    }
    let mut factors = init_factors(matrix.n_users, matrix.n_items, k, rng)?;
    let mut order: Vec<usize> = (0..matrix.entries.len()).collect();
    let mut curve = Vec::with_capacity(epochs as usize);
    let mut scratch = vec![0.0; k];
    for epoch in 0..epochs {
        for i in (1..order.len()).rev() {
            let j = rng.next_below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        for &idx in &order {
            let e = matrix.entries[idx];
            let ui = e.user as usize * k;
            let vj = e.item as usize * k;
            let pred = dot(&factors.u[ui..ui + k], &factors.v[vj..vj + k]);
            let err = e.rating - pred;
            // U_i is read by the V_j update, so stage its new value first.
            for c in 0..k {
                scratch[c] = factors.u[ui + c]
                    + learning_rate * (err * factors.v[vj + c] - reg_lambda * factors.u[ui + c]);
            }
            for c in 0..k {
                factors.v[vj + c] +=
                    learning_rate * (err * factors.u[ui + c] - reg_lambda * factors.v[vj + c]);
                factors.u[ui + c] = scratch[c];
            }
        }
        let loss = training_loss(matrix, &factors, reg_lambda);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(RecommendError::Diverged { epoch, loss });
        }
        curve.push(loss);
    }
    Ok((factors, curve))
}

/// Rank the `k_items` best unpurchased items for a user: score every item
/// not in `exclude` by predicted rating, sort descending, break ties toward
/// the lower item index so rankings are stable across runs.
pub fn recommend_top_k(
    factors: &LatentFactors,
    user: usize,
    k_items: usize,
    exclude: &[u16],
) -> Result<Vec<u16>> {
    if user >= factors.n_users {
        return Err(RecommendError::IndexOutOfRange {
            what: "user",
            index: user,
            len: factors.n_users,
        });
    }
    let mut excluded = vec![false; factors.n_items];
    for &item in exclude {
        if let Some(slot) = excluded.get_mut(item as usize) {
            *slot = true;
        }
    }
    let mut scored: Vec<(f64, u16)> = (0..factors.n_items)
        .filter(|&j| !excluded[j])
        .map(|j| {
            (
                dot(factors.user_factor(user), factors.item_factor(j)),
                j as u16,
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(k_items);
    Ok(scored.into_iter().map(|(_, j)| j).collect())
}

/// Root mean squared prediction error over held-out entries.
pub fn rmse_holdout(factors: &LatentFactors, holdout: &[Interaction]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(RecommendError::EmptyHoldout);
    }
    let mut sse = 0.0;
    for e in holdout {
        let err = e.rating - factors.predict_rating(e.user as usize, e.item as usize)?;
        sse += err * err;
    }
    Ok((sse / holdout.len() as f64).sqrt())
}

/// RMSE of predicting the constant `mean` for every held-out entry — the
/// baseline a factor model has to beat.
pub fn rmse_constant(mean: f64, holdout: &[Interaction]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(RecommendError::EmptyHoldout);
    }
    let sse: f64 = holdout.iter().map(|e| (e.rating - mean).powi(2)).sum();
    Ok((sse / holdout.len() as f64).sqrt())
}

/// Serialize both factor matrices as CSV: one row per factor row, tagged
/// with the matrix name ("U" or "V") and row index.
pub fn factors_to_csv(factors: &LatentFactors) -> String {
    let mut out = String::from("matrix,row");
    for c in 0..factors.k {
        out.push_str(&format!(",f{c}"));
    }
    out.push('\n');
    let mut rows = |name: &str, n: usize, data: &dyn Fn(usize) -> Vec<f64>| {
        for i in 0..n {
            out.push_str(&format!("{name},{i}"));
            for x in data(i) {
                out.push_str(&format!(",{x:.6}"));
            }
            out.push('\n');
        }
    };
    rows("U", factors.n_users, &|i| factors.user_factor(i).to_vec());
    rows("V", factors.n_items, &|j| factors.item_factor(j).to_vec());
    out
}

/// Dense predicted-affinity grid, one row per user, one column per catalog
/// item (named). The visual analog of the recommender's output: darker
/// cells in a rendering = stronger predicted affinity.
pub fn heatmap_to_csv(factors: &LatentFactors) -> String {
    let mut out = String::from("user");
    for j in 0..factors.n_items {
        let name = crate::sim::item(j as u16).name;
        out.push_str(&format!(",{name}"));
    }
    out.push('\n');
    for i in 0..factors.n_users {
        out.push_str(&i.to_string());
        for j in 0..factors.n_items {
            let p = dot(factors.user_factor(i), factors.item_factor(j));
            out.push_str(&format!(",{p:.6}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::FixedMarginPolicy;
    use crate::sim::{run_episode, InventoryContext, InventoryDecider, StationParams};
    use crate::units::Volume;

    fn toy_matrix() -> InteractionMatrix {
        // 3 users × 4 items, 8 observed entries, mildly low-rank.
        InteractionMatrix::from_counts(
            3,
            4,
            &[
                (0, 0, 5),
                (0, 1, 2),
                (0, 3, 1),
                (1, 0, 1),
                (1, 2, 4),
                (2, 1, 3),
                (2, 2, 2),
                (2, 3, 6),
            ],
        )
        .unwrap()
    }

    /// Deterministic synthetic set for loss-curve tests: a noisy rank-2
    /// 30×20 matrix with ~40% of entries observed.
    fn synthetic_matrix() -> InteractionMatrix {
        let mut rng = Rng64::new(7);
        let n_users = 30;
        let n_items = 20;
        let gu: Vec<[f64; 2]> = (0..n_users)
            .map(|_| [rng.next_f64() + 0.2, rng.next_f64() + 0.2])
            .collect();
        let gv: Vec<[f64; 2]> = (0..n_items)
            .map(|_| [rng.next_f64() + 0.2, rng.next_f64() + 0.2])
            .collect();
        let mut counts = Vec::new();
        for i in 0..n_users {
            for j in 0..n_items {
                if rng.next_f64() < 0.4 {
                    let affinity = gu[i][0] * gv[j][0] + gu[i][1] * gv[j][1];
                    let count = (affinity * 4.0).round() as u32;
                    counts.push((i as u32, j as u16, count));
                }
            }
        }
        InteractionMatrix::from_counts(n_users, n_items, &counts).unwrap()
    }

    #[test]
    fn counts_become_log_ratings_and_zeros_are_dropped() {
        let m = InteractionMatrix::from_counts(2, 2, &[(0, 0, 3), (0, 1, 0), (1, 1, 1)]).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.entries()[0].rating - 4.0f64.ln()).abs() < 1e-15);
        assert!((m.entries()[1].rating - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_and_out_of_range_entries_are_rejected() {
        let err = InteractionMatrix::from_counts(2, 2, &[(0, 0, 1), (0, 0, 2)]).unwrap_err();
        assert_eq!(err, RecommendError::DuplicatePair { user: 0, item: 0 });
        let err = InteractionMatrix::from_counts(2, 2, &[(2, 0, 1)]).unwrap_err();
        assert!(matches!(err, RecommendError::IndexOutOfRange { what: "user", .. }));
        let err = InteractionMatrix::from_counts(2, 2, &[(0, 5, 1)]).unwrap_err();
        assert!(matches!(err, RecommendError::IndexOutOfRange { what: "item", .. }));
    }

    #[test]
    fn init_has_documented_shape_range_and_determinism() {
        let mut rng = Rng64::new(11);
        let f = init_factors(3, 4, 2, &mut rng).unwrap();
        assert_eq!((f.n_users(), f.n_items(), f.k()), (3, 4, 2));
        assert_eq!(f.u.len(), 6);
        assert_eq!(f.v.len(), 8);
        assert!(f.u.iter().chain(f.v.iter()).all(|x| (-0.1..=0.1).contains(x)));

        let again = init_factors(3, 4, 2, &mut Rng64::new(11)).unwrap();
        assert_eq!(f, again);
        let different = init_factors(3, 4, 2, &mut Rng64::new(12)).unwrap();
        assert_ne!(f, different);

        assert!(init_factors(0, 4, 2, &mut rng).is_err());
        assert!(init_factors(3, 0, 2, &mut rng).is_err());
        assert!(init_factors(3, 4, 0, &mut rng).is_err());
    }

    #[test]
    fn prediction_is_the_dot_product() {
        let f = LatentFactors {
            k: 2,
            n_users: 2,
            n_items: 1,
            u: vec![1.0, 2.0, 0.0, 0.0],
            v: vec![3.0, 0.5],
        };
        assert_eq!(f.predict_rating(0, 0).unwrap(), 4.0);
        assert_eq!(f.predict_rating(1, 0).unwrap(), 0.0);
        assert!(matches!(
            f.predict_rating(2, 0),
            Err(RecommendError::IndexOutOfRange { what: "user", .. })
        ));
        assert!(matches!(
            f.predict_rating(0, 1),
            Err(RecommendError::IndexOutOfRange { what: "item", .. })
        ));
    }

    #[test]
    fn prediction_matches_a_manual_scalar_loop() {
        let mut rng = Rng64::new(3);
        let f = init_factors(5, 6, 4, &mut rng).unwrap();
        for user in 0..5 {
            for item in 0..6 {
                let mut expect = 0.0;
                for c in 0..4 {
                    expect += f.u[user * 4 + c] * f.v[item * 4 + c];
                }
                let got = f.predict_rating(user, item).unwrap();
                assert!((got - expect).abs() < 1e-12, "({user},{item}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn rank_one_data_is_recovered_nearly_exactly() {
        // R = u·vᵀ with known positive u, v; k=1 SGD should drive holdout
        // error to ~0 because the model class contains the truth.
        let u = [0.5, 1.0, 1.5, 2.0];
        let v = [1.0, 0.8, 0.6, 0.4];
        let mut entries = Vec::new();
        for i in 0..4u32 {
            for j in 0..4u16 {
                entries.push(Interaction {
                    user: i,
                    item: j,
                    rating: u[i as usize] * v[j as usize],
                });
            }
        }
        let matrix = InteractionMatrix {
            n_users: 4,
            n_items: 4,
            entries: entries.clone(),
        };
        let mut rng = Rng64::new(42);
        let (factors, curve) = train_mf(&matrix, 1, 0.0, 0.05, 2000, &mut rng).unwrap();
        let rmse = rmse_holdout(&factors, &entries).unwrap();
        assert!(rmse < 1e-3, "rank-1 recovery rmse {rmse}");
        assert_eq!(curve.len(), 2000);
    }

    #[test]
    fn zero_epochs_returns_the_initialization_untouched() {
        let matrix = toy_matrix();
        let mut rng = Rng64::new(9);
        let (factors, curve) = train_mf(&matrix, 3, 0.05, 0.01, 0, &mut rng).unwrap();
        let initial = init_factors(3, 4, 3, &mut Rng64::new(9)).unwrap();
        assert_eq!(factors, initial);
        assert!(curve.is_empty());
    }

    /// Independent full-pass objective evaluator: indexed loops and Kahan
    /// summation, sharing nothing with `training_loss`.
    fn oracle_loss(matrix: &InteractionMatrix, f: &LatentFactors, lambda: f64) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        let add = |x: f64, sum: &mut f64, comp: &mut f64| {
            let y = x - *comp;
            let t = *sum + y;
            *comp = (t - *sum) - y;
            *sum = t;
        };
        for e in matrix.entries() {
            let mut pred = 0.0;
            for c in 0..f.k() {
                pred += f.u[e.user as usize * f.k() + c] * f.v[e.item as usize * f.k() + c];
            }
            add((e.rating - pred) * (e.rating - pred), &mut sum, &mut comp);
        }
        for x in f.u.iter().chain(f.v.iter()) {
            add(lambda * x * x, &mut sum, &mut comp);
        }
        sum
    }

    #[test]
    fn loss_curve_is_non_increasing_and_matches_an_independent_evaluator() {
        let matrix = synthetic_matrix();
        let epochs = 30u32;
        let mut rng = Rng64::new(5);
        let (_, curve) = train_mf(&matrix, 2, 0.05, 0.005, epochs, &mut rng).unwrap();
        assert_eq!(curve.len(), epochs as usize);
        for w in curve.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "loss increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        // Deterministic RNG consumption means an e-epoch run is a prefix of
        // a longer run, so each sampled epoch's factors can be recreated and
        // scored by the independent evaluator.
        for e in [1u32, 7, 18, 30] {
            let (f, _) = train_mf(&matrix, 2, 0.05, 0.005, e, &mut Rng64::new(5)).unwrap();
            let independent = oracle_loss(&matrix, &f, 0.05);
            let reported = curve[e as usize - 1];
            assert!(
                (independent - reported).abs() <= 1e-9 * independent.max(1.0),
                "epoch {e}: oracle {independent} vs reported {reported}"
            );
        }
    }

    #[test]
    fn oversized_steps_report_divergence_with_the_epoch() {
        let matrix = synthetic_matrix();
        let mut rng = Rng64::new(5);
        let err = train_mf(&matrix, 2, 0.0, 2.5, 50, &mut rng).unwrap_err();
        match err {
            RecommendError::Diverged { loss, .. } => {
                assert!(!loss.is_finite() || loss > 1e12);
                assert!(err.to_string().contains("epoch"), "{err}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn top_k_excludes_ranks_and_breaks_ties_low() {
        let f = LatentFactors {
            k: 1,
            n_users: 1,
            n_items: 3,
            u: vec![1.0],
            v: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(recommend_top_k(&f, 0, 2, &[2]).unwrap(), vec![1, 0]);
        assert_eq!(recommend_top_k(&f, 0, 5, &[0, 1, 2]).unwrap(), Vec::<u16>::new());
        assert_eq!(recommend_top_k(&f, 0, 2, &[]).unwrap(), vec![2, 1]);

        let tied = LatentFactors {
            k: 1,
            n_users: 1,
            n_items: 3,
            u: vec![1.0],
            v: vec![1.0, 1.0, 0.5],
        };
        assert_eq!(recommend_top_k(&tied, 0, 3, &[]).unwrap(), vec![0, 1, 2]);
        assert!(recommend_top_k(&f, 9, 1, &[]).is_err());
    }

    #[test]
    fn top_k_matches_a_brute_force_sort_on_a_random_instance() {
        let mut rng = Rng64::new(99);
        let f = init_factors(50, 30, 4, &mut rng).unwrap();
        let exclude: Vec<u16> = (0..30u16).filter(|_| rng.next_f64() < 0.3).collect();
        for user in [0usize, 17, 49] {
            let got = recommend_top_k(&f, user, 30, &exclude).unwrap();
            // Oracle: score every eligible item, full stable sort.
            let mut oracle: Vec<(f64, u16)> = (0..30u16)
                .filter(|j| !exclude.contains(j))
                .map(|j| {
                    let mut s = 0.0;
                    for c in 0..4 {
                        s += f.u[user * 4 + c] * f.v[j as usize * 4 + c];
                    }
                    (s, j)
                })
                .collect();
            oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expect: Vec<u16> = oracle.into_iter().map(|(_, j)| j).collect();
            assert_eq!(got, expect, "user {user}");
        }
    }

    #[test]
    fn rmse_golden_cases() {
        let f = LatentFactors {
            k: 1,
            n_users: 1,
            n_items: 1,
            u: vec![4.0],
            v: vec![1.0],
        };
        let perfect = [Interaction { user: 0, item: 0, rating: 4.0 }];
        assert_eq!(rmse_holdout(&f, &perfect).unwrap(), 0.0);
        let off_by_two = [Interaction { user: 0, item: 0, rating: 2.0 }];
        assert_eq!(rmse_holdout(&f, &off_by_two).unwrap(), 2.0);
        assert_eq!(rmse_holdout(&f, &[]), Err(RecommendError::EmptyHoldout));
    }

    struct KeepFull;
    impl InventoryDecider for KeepFull {
        fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume> {
            let target = Volume((ctx.params.tank_capacity.mgal() * 4) / 5);
            let d = target - ctx.tank_level;
            (d.mgal() > 0).then_some(d)
        }
    }

    #[test]
    fn factorization_beats_the_global_mean_on_simulated_baskets() {
        let params = StationParams::default();
        let mut pricing = FixedMarginPolicy::default();
        let log = run_episode(&params, 31, &[], 0, &mut pricing, &mut KeepFull, 60 * 24).unwrap();
        let matrix = InteractionMatrix::from_episode(&log);
        assert!(matrix.len() > 500, "need a dense history, got {}", matrix.len());

        let (train, holdout) = matrix.split_holdout(0.2, 17);
        assert_eq!(train.len() + holdout.len(), matrix.len());
        let mut rng = Rng64::new(2);
        let (factors, curve) = train_mf(
            &train,
            DEFAULT_LATENT_DIM,
            DEFAULT_REG_LAMBDA,
            DEFAULT_LEARNING_RATE,
            DEFAULT_EPOCHS,
            &mut rng,
        )
        .unwrap();
        let model = rmse_holdout(&factors, &holdout).unwrap();
        let baseline = rmse_constant(train.global_mean(), &holdout).unwrap();
        assert!(
            model < baseline,
            "model rmse {model:.4} should beat mean-baseline {baseline:.4}"
        );
        assert!(factors.max_row_norm() <= 100.0);
        assert!(factors.is_finite());
        assert!(curve.last().unwrap() < &curve[0]);
    }

    #[test]
    fn holdout_split_partitions_deterministically() {
        let m = synthetic_matrix();
        let (train_a, hold_a) = m.split_holdout(0.25, 4);
        let (train_b, hold_b) = m.split_holdout(0.25, 4);
        assert_eq!(train_a, train_b);
        assert_eq!(hold_a, hold_b);
        assert_eq!(train_a.len() + hold_a.len(), m.len());
        for h in &hold_a {
            assert!(!train_a.entries().contains(h));
        }
        let expected = (m.len() as f64 * 0.25).round() as usize;
        assert_eq!(hold_a.len(), expected);
    }

    #[test]
    fn rescaling_factor_columns_leaves_predictions_unchanged() {
        let mut rng = Rng64::new(21);
        let f = init_factors(6, 5, 3, &mut rng).unwrap();
        // Diagonal G: scale U's columns by g, V's by 1/g.
        let g = [2.0, 0.25, 8.0];
        let mut scaled = f.clone();
        for i in 0..6 {
            for c in 0..3 {
                scaled.u[i * 3 + c] *= g[c];
            }
        }
        for j in 0..5 {
            for c in 0..3 {
                scaled.v[j * 3 + c] /= g[c];
            }
        }
        for i in 0..6 {
            for j in 0..5 {
                let a = f.predict_rating(i, j).unwrap();
                let b = scaled.predict_rating(i, j).unwrap();
                assert!((a - b).abs() < 1e-9, "({i},{j}): {a} vs {b}");
            }
        }
    }

    /// Analytic full-batch gradient of `training_loss` at `f`, flattened
    /// as [all of U, then all of V].
    fn analytic_gradient(matrix: &InteractionMatrix, f: &LatentFactors, lambda: f64) -> Vec<f64> {
        let k = f.k();
        let mut gu = vec![0.0; f.u.len()];
        let mut gv = vec![0.0; f.v.len()];
        for e in matrix.entries() {
            let ui = e.user as usize * k;
            let vj = e.item as usize * k;
            let err = e.rating - dot(&f.u[ui..ui + k], &f.v[vj..vj + k]);
            for c in 0..k {
                gu[ui + c] += -2.0 * err * f.v[vj + c];
                gv[vj + c] += -2.0 * err * f.u[ui + c];
            }
        }
        for (g, x) in gu.iter_mut().zip(&f.u) {
            *g += 2.0 * lambda * x;
        }
        for (g, x) in gv.iter_mut().zip(&f.v) {
            *g += 2.0 * lambda * x;
        }
        gu.extend(gv);
        gu
    }

    #[test]
    fn loss_gradient_matches_central_finite_differences() {
        let matrix = toy_matrix();
        let lambda = 0.05;
        let mut rng = Rng64::new(33);
        let f = init_factors(3, 4, 2, &mut rng).unwrap();
        let grad = analytic_gradient(&matrix, &f, lambda);
        let n_u = f.u.len();
        let h = 1e-6;
        // 20 coordinate probes spread over both matrices.
        for probe in 0..20 {
            let coord = (probe * 7) % (f.u.len() + f.v.len());
            let mut plus = f.clone();
            let mut minus = f.clone();
            if coord < n_u {
                plus.u[coord] += h;
                minus.u[coord] -= h;
            } else {
                plus.v[coord - n_u] += h;
                minus.v[coord - n_u] -= h;
            }
            let fd = (training_loss(&matrix, &plus, lambda)
                - training_loss(&matrix, &minus, lambda))
                / (2.0 * h);
            let scale = grad[coord].abs().max(fd.abs()).max(1.0);
            assert!(
                (grad[coord] - fd).abs() <= 1e-5 * scale,
                "coord {coord}: analytic {} vs fd {fd}",
                grad[coord]
            );
        }
    }

    #[test]
    fn episode_tally_counts_duplicate_basket_items() {
        let params = StationParams::default();
        let mut pricing = FixedMarginPolicy::default();
        let log = run_episode(&params, 8, &[], 0, &mut pricing, &mut KeepFull, 48).unwrap();
        let matrix = InteractionMatrix::from_episode(&log);
        // Oracle: hash-map tally over the same visits.
        let mut expect = std::collections::HashMap::new();
        for v in &log.visits {
            for &item in &v.basket {
                *expect.entry((v.user_id, item)).or_insert(0u32) += 1;
            }
        }
        assert_eq!(matrix.len(), expect.len());
        for e in matrix.entries() {
            let count = expect[&(e.user, e.item)];
            assert!((e.rating - (1.0 + count as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_exports_have_the_documented_shape() {
        let mut rng = Rng64::new(1);
        let f = init_factors(3, 4, 2, &mut rng).unwrap();
        let factors_csv = factors_to_csv(&f);
        let lines: Vec<&str> = factors_csv.lines().collect();
        assert_eq!(lines[0], "matrix,row,f0,f1");
        assert_eq!(lines.len(), 1 + 3 + 4);
        assert!(lines[1].starts_with("U,0,"));
        assert!(lines[4].starts_with("V,0,"));

        let heat = heatmap_to_csv(&f);
        let lines: Vec<&str> = heat.lines().collect();
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[0].starts_with("user,"));
        assert_eq!(lines[0].split(',').count(), 1 + 4);
        assert_eq!(lines[1].split(',').count(), 1 + 4);
    }
}
