//! Generate, serialize, parse and analyse small traces across modules.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use d2d_core::cascade::{evaluate_coverage, select_group_seeds, CascadeParams, CoverageConfig};
use d2d_core::graphing::{compute_groups, EncounterGraph};
use d2d_core::influence::SeedStrategy;
use d2d_core::netmetrics::group_metrics;
use d2d_core::synthgen::{generate_trace, GeneratorConfig};
use d2d_core::trace::{parse_event_log, summarize, write_event_log, TierIndex};
use d2d_core::traffic::redundancy_timeseries;

fn config(seed: u64, groups: usize) -> GeneratorConfig {
    GeneratorConfig {
        rng_seed: seed,
        num_groups: groups,
        ..GeneratorConfig::default()
    }
}

#[test]
fn groups_recover_the_generated_partition() {
    let out = generate_trace(&config(21, 300)).unwrap();
    let partition = compute_groups(&EncounterGraph::build(&out.trace.events));
    let mut expected: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for (&user, &group) in &out.ledger.group_of {
        expected.entry(group).or_default().insert(user);
    }
    let expected: BTreeSet<BTreeSet<u64>> =
        expected.into_values().filter(|m| m.len() >= 2).collect();
    let found: BTreeSet<BTreeSet<u64>> = partition
        .groups
        .iter()
        .map(|g| g.members.iter().copied().collect())
        .collect();
    assert_eq!(found, expected);
    assert_eq!(out.ledger.event_count, out.trace.events.len() as u64);
}

#[test]
fn serialized_trace_round_trips_into_identical_analyses() {
    let out = generate_trace(&config(22, 200)).unwrap();
    let mut bytes = Vec::new();
    write_event_log(&mut bytes, &out.trace.header, &out.trace.events).unwrap();
    let parsed = parse_event_log(bytes.as_slice(), true).unwrap();
    assert!(parsed.errors.is_empty());
    let trace = parsed.trace;
    assert_eq!(trace.header, out.trace.header);
    assert_eq!(trace.events.len(), out.trace.events.len());
    assert_eq!(
        summarize(&trace.events).num_events,
        out.trace.events.len() as u64
    );

    let graph = EncounterGraph::build(&trace.events);
    let partition = compute_groups(&graph);
    let original = compute_groups(&EncounterGraph::build(&out.trace.events));
    assert_eq!(partition, original);
    let metrics = group_metrics(&graph, &partition).unwrap();
    assert_eq!(metrics.len(), partition.len());

    let report = redundancy_timeseries(&trace.events, 86_400).unwrap();
    let total: u64 = report.rows.iter().map(|r| r.total_bytes).sum();
    assert_eq!(
        total,
        trace.events.iter().map(|e| e.size_bytes).sum::<u64>()
    );
}

#[test]
fn seeds_and_coverage_stay_inside_their_groups() {
    let out = generate_trace(&config(23, 300)).unwrap();
    let tiers = TierIndex::new(&out.ledger.tiers).unwrap();
    let events = &out.trace.events;
    let partition = compute_groups(&EncounterGraph::build(events));
    for strategy in [SeedStrategy::TreeRoot, SeedStrategy::Random] {
        let seeds = select_group_seeds(
            events,
            &partition,
            &tiers,
            strategy,
            &CascadeParams::default(),
            4,
            0.5,
        )
        .unwrap();
        assert_eq!(seeds.len(), partition.len());
        for s in &seeds {
            assert_eq!(partition.group_of(s.seed), Some(s.group_id));
        }
    }
    let config = CoverageConfig {
        sample_size: 40,
        ..CoverageConfig::default()
    };
    let study = evaluate_coverage(events, &partition, &tiers, &config).unwrap();
    assert_eq!(study.outcomes.len(), 40);
    for o in &study.outcomes {
        assert!(o.size >= config.min_group_size);
        assert!(o.coverage > 0.0 && o.coverage <= 1.0);
        assert!(o.encountered_coverage >= o.coverage);
    }
    let again = evaluate_coverage(events, &partition, &tiers, &config).unwrap();
    assert_eq!(study, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generation_is_a_function_of_the_config(seed in 0u64..1_000, groups in 1usize..60) {
        let a = generate_trace(&config(seed, groups)).unwrap();
        let b = generate_trace(&config(seed, groups)).unwrap();
        prop_assert_eq!(&a, &b);
        for e in &a.trace.events {
            prop_assert!(a.trace.header.contains(e.timestamp));
            prop_assert_ne!(e.sender, e.receiver);
            prop_assert_eq!(a.ledger.group_of[&e.sender], a.ledger.group_of[&e.receiver]);
        }
    }
}
