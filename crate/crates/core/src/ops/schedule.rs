//! Maintenance scheduling: greedy earliest-feasible assignment of alerts
//! to service slots, urgent work first.

use crate::monitor::{Alert, AlertKind, AssetId, Severity};
use crate::units::Money;

/// Service slots opened per day by the governance loop.
pub const SLOT_HOURS_PER_DAY: [u32; 2] = [9, 14];

/// One bookable service window.
#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceSlot {
    pub slot_id: u32,
    pub start_hour: u32,
    /// Asset the booked work is for; `None` while open.
    pub asset_id: Option<AssetId>,
    pub booked: bool,
    /// Cost-table price of the booked work; zero while open.
    pub estimated_cost: Money,
}

impl MaintenanceSlot {
    pub fn open(slot_id: u32, start_hour: u32) -> MaintenanceSlot {
        MaintenanceSlot {
            slot_id,
            start_hour,
            asset_id: None,
            booked: false,
            estimated_cost: Money::ZERO,
        }
    }
}

/// The service windows day `day` opens: mid-morning and early afternoon.
pub fn daily_slots(day: u32) -> Vec<MaintenanceSlot> {
    SLOT_HOURS_PER_DAY
        .iter()
        .enumerate()
        .map(|(i, offset)| {
            MaintenanceSlot::open(
                day * SLOT_HOURS_PER_DAY.len() as u32 + i as u32,
                day * 24 + offset,
            )
        })
        .collect()
}

/// A committed slot-alert pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct Booking {
    pub slot_id: u32,
    pub start_hour: u32,
    pub asset: AssetId,
    pub kind: AlertKind,
    pub severity: Severity,
    /// Hour of the alert that caused the booking.
    pub alert_hour: u32,
    pub cost: Money,
}

/// Assign alerts to open slots: urgent alerts first, then by alert hour,
/// then by asset; each takes the earliest open slot that starts at or
/// after its hour (work cannot be scheduled before the problem is found).
/// Booked slots get the alert's asset and cost-table price.
///
/// `slots` must be ordered by `start_hour`; among equal start hours the
/// earlier slice position wins.
pub fn schedule_service(alerts: &[Alert], slots: &mut [MaintenanceSlot]) -> Vec<Booking> {
    debug_assert!(
        slots.windows(2).all(|w| w[0].start_hour <= w[1].start_hour),
        "slots must be time-ordered"
    );
    let mut order: Vec<&Alert> = alerts.iter().collect();
    order.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then(a.hour.cmp(&b.hour))
            .then(a.asset.cmp(&b.asset))
    });

    let mut bookings = Vec::new();
    for alert in order {
        let slot = slots
            .iter_mut()
            .find(|s| !s.booked && s.start_hour >= alert.hour);
        if let Some(slot) = slot {
            slot.booked = true;
            slot.asset_id = Some(alert.asset);
            slot.estimated_cost = alert.estimated_cost;
            bookings.push(Booking {
                slot_id: slot.slot_id,
                start_hour: slot.start_hour,
                asset: alert.asset,
                kind: alert.kind,
                severity: alert.severity,
                alert_hour: alert.hour,
                cost: alert.estimated_cost,
            });
        }
    }
    bookings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::alert_cost;
    use crate::rng::Rng64;

    fn alert(kind: AlertKind, severity: Severity, asset: AssetId, hour: u32) -> Alert {
        Alert::new(kind, severity, asset, hour, String::from("test"))
    }

    #[test]
    fn no_alerts_no_bookings() {
        let mut slots = daily_slots(0);
        assert!(schedule_service(&[], &mut slots).is_empty());
        assert!(slots.iter().all(|s| !s.booked));
    }

    #[test]
    fn urgent_alerts_take_the_slots_in_timestamp_order() {
        let mut slots = vec![MaintenanceSlot::open(0, 10), MaintenanceSlot::open(1, 15)];
        let alerts = vec![
            alert(AlertKind::Tire, Severity::Advisory, AssetId::Vehicle(7), 1),
            alert(AlertKind::Fraud, Severity::Urgent, AssetId::Dispenser(2), 5),
            alert(AlertKind::Leak, Severity::Urgent, AssetId::Tank, 3),
        ];
        let bookings = schedule_service(&alerts, &mut slots);
        assert_eq!(bookings.len(), 2);
        // The hour-3 urgent leak books first and takes the earlier slot.
        assert_eq!(bookings[0].kind, AlertKind::Leak);
        assert_eq!(bookings[0].slot_id, 0);
        assert_eq!(bookings[1].kind, AlertKind::Fraud);
        assert_eq!(bookings[1].slot_id, 1);
        // The advisory found no remaining slot.
        assert!(bookings.iter().all(|b| b.kind != AlertKind::Tire));
    }

    #[test]
    fn feasibility_never_books_a_slot_before_the_alert() {
        let mut slots = vec![MaintenanceSlot::open(0, 4)];
        let alerts = vec![alert(
            AlertKind::Battery,
            Severity::Advisory,
            AssetId::Vehicle(1),
            9,
        )];
        assert!(schedule_service(&alerts, &mut slots).is_empty());
        assert!(!slots[0].booked);
    }

    #[test]
    fn booked_slots_carry_the_cost_table_price_and_asset() {
        let cases = [
            (AlertKind::Leak, AssetId::Tank),
            (AlertKind::VibrationFault, AssetId::Dispenser(3)),
            (AlertKind::Battery, AssetId::Vehicle(4)),
            (AlertKind::Tire, AssetId::Vehicle(5)),
            (AlertKind::Fraud, AssetId::Dispenser(1)),
        ];
        for (kind, asset) in cases {
            let mut slots = vec![MaintenanceSlot::open(0, 20)];
            let alerts = vec![alert(kind, Severity::Advisory, asset, 2)];
            let bookings = schedule_service(&alerts, &mut slots);
            assert_eq!(bookings.len(), 1);
            assert_eq!(bookings[0].cost, alert_cost(kind));
            assert_eq!(slots[0].estimated_cost, alert_cost(kind));
            assert_eq!(slots[0].asset_id, Some(asset));
            assert!(slots[0].booked);
        }
    }

    #[test]
    fn equal_priority_ties_break_by_asset_order() {
        // Same severity and hour: tank before dispensers before vehicles.
        let mut slots = vec![MaintenanceSlot::open(0, 10), MaintenanceSlot::open(1, 12)];
        let alerts = vec![
            alert(AlertKind::Battery, Severity::Urgent, AssetId::Vehicle(0), 6),
            alert(AlertKind::Leak, Severity::Urgent, AssetId::Tank, 6),
        ];
        let bookings = schedule_service(&alerts, &mut slots);
        assert_eq!(bookings[0].asset, AssetId::Tank);
        assert_eq!(bookings[0].slot_id, 0);
        assert_eq!(bookings[1].asset, AssetId::Vehicle(0));
    }

    /// Exhaustive matcher: try every feasible assignment, preferring (by
    /// priority position) more-booked prefixes, then earlier slots. The
    /// greedy must reproduce its choice exactly.
    fn oracle(alerts: &[Alert], slots: &[MaintenanceSlot]) -> Vec<Option<u32>> {
        let mut order: Vec<&Alert> = alerts.iter().collect();
        order.sort_by(|a, b| {
            b.severity
                .cmp(&a.severity)
                .then(a.hour.cmp(&b.hour))
                .then(a.asset.cmp(&b.asset))
        });

        // Assignment value per priority position: slot (start_hour,
        // slot_id) when booked. Lower is better; None (unbooked) is worst.
        type Key = Vec<Option<(std::cmp::Reverse<u32>, std::cmp::Reverse<u32>)>>;
        fn better(a: &Key, b: &Key) -> bool {
            // Booked beats unbooked at the first differing position;
            // between booked, the earlier slot wins. Reverse-wrapped so a
            // plain > comparison prefers Some(earlier) > Some(later) >
            // None.
            a > b
        }
        fn search(
            pos: usize,
            order: &[&Alert],
            slots: &[MaintenanceSlot],
            used: &mut Vec<bool>,
            current: &mut Key,
            best: &mut Option<Key>,
            best_raw: &mut Vec<Option<u32>>,
            raw: &mut Vec<Option<u32>>,
        ) {
            if pos == order.len() {
                if best.as_ref().map_or(true, |b| better(current, b)) {
                    *best = Some(current.clone());
                    *best_raw = raw.clone();
                }
                return;
            }
            for (i, s) in slots.iter().enumerate() {
                if !used[i] && s.start_hour >= order[pos].hour {
                    used[i] = true;
                    current.push(Some((
                        std::cmp::Reverse(s.start_hour),
                        std::cmp::Reverse(s.slot_id),
                    )));
                    raw.push(Some(s.slot_id));
                    search(pos + 1, order, slots, used, current, best, best_raw, raw);
                    raw.pop();
                    current.pop();
                    used[i] = false;
                }
            }
            // Also consider leaving this alert unbooked.
            current.push(None);
            raw.push(None);
            search(pos + 1, order, slots, used, current, best, best_raw, raw);
            raw.pop();
            current.pop();
        }

        let mut best = None;
        let mut best_raw = Vec::new();
        search(
            0,
            &order,
            slots,
            &mut vec![false; slots.len()],
            &mut Vec::new(),
            &mut best,
            &mut best_raw,
            &mut Vec::new(),
        );
        best_raw
    }

    #[test]
    fn randomized_sets_match_the_exhaustive_matcher() {
        let mut rng = Rng64::new(2024);
        for case in 0..250 {
            let n_alerts = 1 + (rng.next_u64() % 6) as usize;
            let n_slots = 1 + (rng.next_u64() % 5) as usize;
            let alerts: Vec<Alert> = (0..n_alerts)
                .map(|i| {
                    let kind = crate::monitor::ALERT_KINDS[(rng.next_u64() % 5) as usize];
                    let severity = if rng.next_u64() % 2 == 0 {
                        Severity::Urgent
                    } else {
                        Severity::Advisory
                    };
                    alert(
                        kind,
                        severity,
                        AssetId::Vehicle(i as u32),
                        (rng.next_u64() % 30) as u32,
                    )
                })
                .collect();
            let mut hours: Vec<u32> = (0..n_slots).map(|_| (rng.next_u64() % 40) as u32).collect();
            hours.sort_unstable();
            let mut slots: Vec<MaintenanceSlot> = hours
                .iter()
                .enumerate()
                .map(|(i, h)| MaintenanceSlot::open(i as u32, *h))
                .collect();

            let expect = oracle(&alerts, &slots);
            let bookings = schedule_service(&alerts, &mut slots);

            // Rebuild the greedy's assignment vector in priority order.
            // Bookings come out in priority order, but skipped alerts are
            // absent; realign by walking both lists.
            let mut order: Vec<&Alert> = alerts.iter().collect();
            order.sort_by(|a, b| {
                b.severity
                    .cmp(&a.severity)
                    .then(a.hour.cmp(&b.hour))
                    .then(a.asset.cmp(&b.asset))
            });
            let mut realigned: Vec<Option<u32>> = Vec::with_capacity(order.len());
            let mut bi = 0;
            for a in &order {
                if bi < bookings.len()
                    && bookings[bi].alert_hour == a.hour
                    && bookings[bi].asset == a.asset
                    && bookings[bi].severity == a.severity
                    && bookings[bi].kind == a.kind
                {
                    realigned.push(Some(bookings[bi].slot_id));
                    bi += 1;
                } else {
                    realigned.push(None);
                }
            }
            assert_eq!(bi, bookings.len(), "case {case}: bookings misaligned");
            assert_eq!(realigned, expect, "case {case}");
        }
    }

    #[test]
    fn advisories_never_jump_an_urgent_queue() {
        let mut rng = Rng64::new(513);
        for _ in 0..200 {
            let n_alerts = 1 + (rng.next_u64() % 7) as usize;
            let n_slots = 1 + (rng.next_u64() % 4) as usize;
            let alerts: Vec<Alert> = (0..n_alerts)
                .map(|i| {
                    let severity = if rng.next_u64() % 2 == 0 {
                        Severity::Urgent
                    } else {
                        Severity::Advisory
                    };
                    alert(
                        AlertKind::Tire,
                        severity,
                        AssetId::Vehicle(i as u32),
                        (rng.next_u64() % 30) as u32,
                    )
                })
                .collect();
            let mut hours: Vec<u32> = (0..n_slots).map(|_| (rng.next_u64() % 40) as u32).collect();
            hours.sort_unstable();
            let mut slots: Vec<MaintenanceSlot> = hours
                .iter()
                .enumerate()
                .map(|(i, h)| MaintenanceSlot::open(i as u32, *h))
                .collect();
            let bookings = schedule_service(&alerts, &mut slots);

            // If an urgent alert went unbooked, every slot it could have
            // used must be held by other urgent work.
            for a in alerts.iter().filter(|a| a.severity == Severity::Urgent) {
                let booked = bookings
                    .iter()
                    .any(|b| b.asset == a.asset && b.alert_hour == a.hour);
                if booked {
                    continue;
                }
                for slot in slots.iter().filter(|s| s.start_hour >= a.hour) {
                    assert!(slot.booked, "feasible slot left open past an urgent alert");
                    let holder = bookings
                        .iter()
                        .find(|b| b.slot_id == slot.slot_id)
                        .expect("booked slot must appear in bookings");
                    assert_eq!(
                        holder.severity,
                        Severity::Urgent,
                        "advisory booked while an urgent alert waited"
                    );
                }
            }
        }
    }

    #[test]
    fn daily_slots_are_ordered_and_uniquely_numbered() {
        let mut all: Vec<MaintenanceSlot> = Vec::new();
        for day in 0..5 {
            all.extend(daily_slots(day));
        }
        assert!(all.windows(2).all(|w| w[0].start_hour < w[1].start_hour));
        assert!(all.windows(2).all(|w| w[0].slot_id + 1 == w[1].slot_id));
        assert_eq!(all[0].start_hour, 9);
        assert_eq!(all[1].start_hour, 14);
        assert_eq!(all[2].start_hour, 33);
    }

    #[test]
    #[should_panic(expected = "time-ordered")]
    fn unsorted_slots_are_rejected_in_debug_builds() {
        let mut slots = vec![MaintenanceSlot::open(0, 20), MaintenanceSlot::open(1, 5)];
        let alerts = vec![alert(AlertKind::Leak, Severity::Urgent, AssetId::Tank, 1)];
        schedule_service(&alerts, &mut slots);
    }
}
