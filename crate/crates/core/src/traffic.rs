//! Redundant ("reduplicate") delivery volume over time, per category.
//!
//! A delivery is redundant iff the same file was delivered earlier anywhere
//! in the trace; the first delivery of each file is the only non-redundant
//! one. Bytes are attributed to the window containing the event timestamp.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Category, ContentId, SharingEvent, Timestamp};

pub const DEFAULT_WINDOW_SECONDS: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyRow {
    pub window_start_ts: Timestamp,
    pub category: Category,
    pub total_bytes: u64,
    pub redundant_bytes: u64,
    pub redundant_ratio: f64,
    pub deliveries: u64,
    pub redundant_deliveries: u64,
    pub distinct_files: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub window_seconds: i64,
    /// Sorted by `(window_start_ts, category)`.
    pub rows: Vec<RedundancyRow>,
}

type DeliveryKey = (Timestamp, u64, u64, Category, u64);

fn delivery_key(ev: &SharingEvent) -> DeliveryKey {
    (
        ev.timestamp,
        ev.sender,
        ev.receiver,
        ev.category,
        ev.size_bytes,
    )
}

fn ratio(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

#[derive(Default)]
struct Acc {
    total: u64,
    redundant: u64,
    deliveries: u64,
    redundant_deliveries: u64,
    files: HashSet<ContentId>,
}

/// Windows are aligned to multiples of `window_seconds` since the epoch.
pub fn redundancy_timeseries(
    events: &[SharingEvent],
    window_seconds: i64,
) -> Result<RedundancyReport> {
    if window_seconds <= 0 {
        return Err(Error::InvalidArgument(
            "window_seconds must be positive".into(),
        ));
    }
    // Earliest delivery per file under a total order, so exact timestamp ties
    // are resolved identically regardless of input order.
    let first: HashMap<ContentId, DeliveryKey> = events
        .par_iter()
        .fold(
            HashMap::new,
            |mut m: HashMap<ContentId, DeliveryKey>, ev| {
                let k = delivery_key(ev);
                m.entry(ev.file)
                    .and_modify(|cur| *cur = (*cur).min(k))
                    .or_insert(k);
                m
            },
        )
        .reduce(HashMap::new, |mut a, b| {
            for (f, k) in b {
                a.entry(f)
                    .and_modify(|cur| *cur = (*cur).min(k))
                    .or_insert(k);
            }
            a
        });

    let mut first_claimed: HashSet<ContentId> = HashSet::new();
    let mut acc: BTreeMap<(Timestamp, Category), Acc> = BTreeMap::new();
    for ev in events {
        let window = ev.timestamp.div_euclid(window_seconds) * window_seconds;
        let a = acc.entry((window, ev.category)).or_default();
        // Identical duplicate keys: only one of them is the first delivery.
        let is_first = first[&ev.file] == delivery_key(ev) && first_claimed.insert(ev.file);
        a.total += ev.size_bytes;
        a.deliveries += 1;
        a.files.insert(ev.file);
        if !is_first {
            a.redundant += ev.size_bytes;
            a.redundant_deliveries += 1;
        }
    }
    let rows = acc
        .into_iter()
        .map(|((window_start_ts, category), a)| RedundancyRow {
            window_start_ts,
            category,
            total_bytes: a.total,
            redundant_bytes: a.redundant,
            redundant_ratio: ratio(a.redundant, a.total),
            deliveries: a.deliveries,
            redundant_deliveries: a.redundant_deliveries,
            distinct_files: a.files.len() as u64,
        })
        .collect();
    Ok(RedundancyReport {
        window_seconds,
        rows,
    })
}

/// Per-category totals `(total_bytes, redundant_bytes)` over all windows.
pub fn category_totals(report: &RedundancyReport) -> BTreeMap<Category, (u64, u64)> {
    let mut out = BTreeMap::new();
    for row in &report.rows {
        let e = out.entry(row.category).or_insert((0, 0));
        e.0 += row.total_bytes;
        e.1 += row.redundant_bytes;
    }
    out
}

/// Categories by descending overall redundant-byte ratio, ties by name.
pub fn category_redundancy_ranking(report: &RedundancyReport) -> Vec<(Category, f64)> {
    let mut ranking: Vec<(Category, f64)> = category_totals(report)
        .into_iter()
        .map(|(c, (total, redundant))| (c, ratio(redundant, total)))
        .collect();
    ranking.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.as_str().cmp(b.0.as_str()))
    });
    ranking
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MB: u64 = 1 << 20;

    fn ev(ts: i64, file: u64, size: u64, category: Category) -> SharingEvent {
        SharingEvent {
            timestamp: ts,
            sender: 1,
            receiver: 2,
            file,
            size_bytes: size,
            category,
            geo: None,
        }
    }

    #[test]
    fn n_minus_one_rule() {
        let events: Vec<_> = (0..3)
            .map(|t| ev(t * 100_000, 7, 100 * MB, Category::Video))
            .collect();
        let r = redundancy_timeseries(&events, DEFAULT_WINDOW_SECONDS).unwrap();
        let totals = category_totals(&r);
        assert_eq!(totals[&Category::Video], (300 * MB, 200 * MB));
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[0].redundant_bytes, 0);
        assert_eq!(
            category_redundancy_ranking(&r),
            vec![(Category::Video, 2.0 / 3.0)]
        );
    }

    #[test]
    fn distinct_files_are_not_redundant() {
        let events: Vec<_> = (0..10).map(|f| ev(f as i64, f, 5, Category::App)).collect();
        let r = redundancy_timeseries(&events, 3).unwrap();
        assert!(r
            .rows
            .iter()
            .all(|row| row.redundant_bytes == 0 && row.redundant_ratio == 0.0));
        assert_eq!(r.rows.iter().map(|row| row.distinct_files).sum::<u64>(), 10);
    }

    #[test]
    fn rejects_bad_window() {
        assert!(redundancy_timeseries(&[], 0).is_err());
    }

    #[test]
    fn ranking_orders_and_breaks_ties() {
        // app 0.7 redundant, video 0.6, music 0.1 by bytes
        let events = vec![
            ev(0, 1, 30, Category::App),
            ev(1, 1, 70, Category::App),
            ev(0, 2, 40, Category::Video),
            ev(1, 2, 60, Category::Video),
            ev(0, 3, 90, Category::Music),
            ev(1, 3, 10, Category::Music),
        ];
        let r = redundancy_timeseries(&events, 10).unwrap();
        let cats: Vec<_> = category_redundancy_ranking(&r)
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        assert_eq!(cats, vec![Category::App, Category::Video, Category::Music]);

        let tie = vec![ev(0, 1, 1, Category::Video), ev(0, 2, 1, Category::App)];
        let r = redundancy_timeseries(&tie, 10).unwrap();
        let cats: Vec<_> = category_redundancy_ranking(&r)
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        assert_eq!(cats, vec![Category::App, Category::Video]);
    }

    fn arb_events() -> impl Strategy<Value = Vec<SharingEvent>> {
        proptest::collection::vec((0i64..500, 0u64..15, 0usize..5), 0..80).prop_map(|v| {
            v.into_iter()
                .map(|(ts, file, c)| ev(ts, file, 1000 + file * 17, Category::ALL[c]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conservation_and_brute_force(events in arb_events(), window in 1i64..200) {
            let r = redundancy_timeseries(&events, window).unwrap();
            let total: u64 = r.rows.iter().map(|x| x.total_bytes).sum();
            prop_assert_eq!(total, events.iter().map(|e| e.size_bytes).sum::<u64>());

            // Brute force: every delivery of a file after its first, with the
            // first decided by the same (time, sender, receiver, category, size) order.
            let mut by_file: BTreeMap<u64, Vec<&SharingEvent>> = BTreeMap::new();
            for e in &events {
                by_file.entry(e.file).or_default().push(e);
            }
            let mut expect: BTreeMap<Category, u64> = BTreeMap::new();
            for (_, mut list) in by_file {
                list.sort_by_key(|e| (e.timestamp, e.category, e.size_bytes));
                for e in &list[1..] {
                    *expect.entry(e.category).or_default() += e.size_bytes;
                }
            }
            for (c, (_, red)) in category_totals(&r) {
                prop_assert_eq!(red, expect.get(&c).copied().unwrap_or(0));
            }
            for row in &r.rows {
                prop_assert!(row.redundant_bytes <= row.total_bytes);
            }
        }

        #[test]
        fn order_invariant_and_dedup(mut events in arb_events(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let a = redundancy_timeseries(&events, 50).unwrap();
            events.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = redundancy_timeseries(&events, 50).unwrap();
            prop_assert_eq!(&a, &b);

            let mut seen = HashSet::new();
            events.sort_by_key(|e| e.timestamp);
            events.retain(|e| seen.insert(e.file));
            let c = redundancy_timeseries(&events, 50).unwrap();
            prop_assert!(c.rows.iter().all(|r| r.redundant_bytes == 0));
        }
    }
}
