//! The convenience-store catalog and per-customer taste model.
//!
//! Forty items across six categories, with fixed retail prices and unit
//! costs in whole cents. Each recurring customer gets a persistent
//! preference vector over categories, derived from the scenario seed — two
//! favorite categories carry most of the probability mass. That structure
//! is what makes purchase histories low-rank and therefore learnable by the
//! recommender.

use crate::rng::Rng64;
use crate::sim::tag;
use crate::units::Money;

pub const N_CATEGORIES: usize = 6;
pub const N_ITEMS: usize = 40;

pub const CATEGORY_NAMES: [&str; N_CATEGORIES] = [
    "beverages",
    "snacks",
    "food_to_go",
    "car_care",
    "accessories",
    "services",
];

/// One stocked item: display name, category, retail price, unit cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogItem {
    pub name: &'static str,
    pub category: u8,
    pub price: Money,
    pub cost: Money,
}

const fn it(name: &'static str, category: u8, price: i64, cost: i64) -> CatalogItem {
    CatalogItem {
        name,
        category,
        price: Money(price),
        cost: Money(cost),
    }
}

/// The fixed 40-item catalog. Index in this array is the item id used in
/// baskets, telemetry, and the recommender's interaction matrix.
pub const CATALOG: [CatalogItem; N_ITEMS] = [
    // beverages (10)
    it("drip_coffee_16oz", 0, 219, 40),
    it("cold_brew_12oz", 0, 349, 120),
    it("fountain_soda_32oz", 0, 189, 30),
    it("energy_drink_16oz", 0, 379, 210),
    it("spring_water_1l", 0, 229, 60),
    it("sports_drink_28oz", 0, 299, 140),
    it("iced_tea_18oz", 0, 249, 90),
    it("orange_juice_12oz", 0, 329, 160),
    it("hot_chocolate_12oz", 0, 259, 55),
    it("sparkling_water_16oz", 0, 199, 70),
    // snacks (8)
    it("trail_mix_6oz", 1, 449, 230),
    it("potato_chips_2oz", 1, 229, 95),
    it("chocolate_bar", 1, 189, 80),
    it("beef_jerky_3oz", 1, 699, 390),
    it("granola_bar", 1, 159, 60),
    it("salted_peanuts_4oz", 1, 279, 120),
    it("gummy_candy_5oz", 1, 249, 100),
    it("protein_bar", 1, 289, 140),
    // food to go (6)
    it("breakfast_sandwich", 2, 479, 220),
    it("hot_dog", 2, 299, 95),
    it("turkey_wrap", 2, 649, 310),
    it("pizza_slice", 2, 359, 130),
    it("fruit_cup", 2, 399, 190),
    it("donut", 2, 179, 50),
    // car care (6)
    it("washer_fluid_1gal", 3, 499, 210),
    it("motor_oil_5w30_qt", 3, 899, 480),
    it("fuel_injector_cleaner", 3, 799, 350),
    it("deicer_spray", 3, 549, 230),
    it("microfiber_towels_3pk", 3, 649, 260),
    it("tire_shine_spray", 3, 699, 290),
    // accessories (6)
    it("phone_charger_usbc", 4, 1_299, 520),
    it("air_freshener_pine", 4, 349, 90),
    it("sunglasses_polarized", 4, 1_499, 450),
    it("travel_mug_16oz", 4, 1_199, 430),
    it("ice_scraper", 4, 449, 140),
    it("road_atlas", 4, 1_599, 640),
    // services (4)
    it("car_wash_basic", 5, 999, 250),
    it("car_wash_deluxe", 5, 1_699, 420),
    it("vacuum_token", 5, 299, 30),
    it("air_pump_token", 5, 199, 20),
];

/// Catalog lookup by basket id.
pub fn item(id: u16) -> &'static CatalogItem {
    &CATALOG[id as usize]
}

/// Retail value and margin of a basket, exact in cents.
pub fn basket_margin(basket: &[u16]) -> (Money, Money) {
    let mut revenue = Money::ZERO;
    let mut cost = Money::ZERO;
    for &id in basket {
        let i = item(id);
        revenue += i.price;
        cost += i.cost;
    }
    (revenue, revenue - cost)
}

/// A customer's category taste: sampling weights, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPrefs {
    pub weights: [f64; N_CATEGORIES],
}

/// Persistent per-customer preferences, a pure function of (seed, user).
/// Two favorite categories carry roughly 47% and 31% of the mass; the
/// rest split the remainder.
pub fn user_preferences(seed: u64, user_id: u32) -> UserPrefs {
    let mut rng = Rng64::substream(seed, tag::PREFS, user_id as u64);
    let first = rng.next_below(N_CATEGORIES as u64) as usize;
    let mut second = rng.next_below((N_CATEGORIES - 1) as u64) as usize;
    if second >= first {
        second += 1;
    }
    let mut weights = [0.05; N_CATEGORIES];
    weights[first] += 0.40;
    weights[second] += 0.25;
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    UserPrefs { weights }
}

/// Item ids grouped by category, in catalog order. Within a category the
/// leading items are the popular ones (weight ∝ 1/(1+rank)).
fn category_items(category: u8) -> impl Iterator<Item = u16> {
    (0..N_ITEMS as u16).filter(move |&id| CATALOG[id as usize].category == category)
}

/// Draw one item id according to `prefs`: category by taste weight, item
/// within category by popularity rank.
pub fn sample_item(prefs: &UserPrefs, rng: &mut Rng64) -> u16 {
    let mut u = rng.next_f64();
    let mut category = (N_CATEGORIES - 1) as u8;
    for (c, w) in prefs.weights.iter().enumerate() {
        if u < *w {
            category = c as u8;
            break;
        }
        u -= w;
    }
    let ids: Vec<u16> = category_items(category).collect();
    let total: f64 = (0..ids.len()).map(|r| 1.0 / (1.0 + r as f64)).sum();
    let mut v = rng.next_f64() * total;
    for (rank, &id) in ids.iter().enumerate() {
        let w = 1.0 / (1.0 + rank as f64);
        if v < w {
            return id;
        }
        v -= w;
    }
    *ids.last().expect("category is never empty")
}

/// Basket size distribution: mostly singles, occasionally a handful.
const BASKET_SIZE_CDF: [(f64, usize); 4] = [(0.45, 1), (0.75, 2), (0.92, 3), (1.0, 4)];

/// Draw a basket (1–4 items, duplicates allowed) for a customer.
pub fn sample_basket(prefs: &UserPrefs, rng: &mut Rng64) -> Vec<u16> {
    let u = rng.next_f64();
    let size = BASKET_SIZE_CDF
        .iter()
        .find(|(p, _)| u < *p)
        .map(|(_, s)| *s)
        .unwrap_or(4);
    (0..size).map(|_| sample_item(prefs, rng)).collect()
}
