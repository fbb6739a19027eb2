//! Hash-chain tamper detection, replica audits, quorum faults and the golden
//! ledger file.

use std::path::Path;

use greengrid_core::ledger::{
    cross_audit, file, keys, verify_chain, CustodyEvent, Digest, EventDraft, EventKind, LedgerCluster, LedgerError,
    LedgerReplica, ReplicaOwner, Verification, Violation,
};
use greengrid_core::model::{ActorId, GeoPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACTORS: [&str; 4] = ["citizen-1", "bin-operator", "collector-0", "recycler-1"];

fn draft(k: u64, rng: &mut impl Rng) -> EventDraft {
    let kind = EventKind::ALL[rng.gen_range(0..EventKind::ALL.len())];
    let region = ["north-east", "south-west"][rng.gen_range(0..2)];
    EventDraft::new(
        kind,
        format!("dev-{:05}", k / 2),
        GeoPoint::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), region).unwrap(),
        k * 60 + rng.gen_range(0..60),
        f64::from(rng.gen_range(1u32..5000)) / 1000.0,
        ActorId::new(ACTORS[rng.gen_range(0..ACTORS.len())]),
    )
    .with(keys::REGION, region)
    .with(keys::POINTS, rng.gen_range(0..50))
}

fn cluster(replicas: usize) -> LedgerCluster {
    let mut c = LedgerCluster::new(replicas).unwrap();
    for a in ACTORS {
        c.register_recipient(ActorId::new(a));
    }
    c
}

fn chain(n: u64, seed: u64) -> Vec<CustodyEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = cluster(3);
    for k in 0..n {
        c.append(draft(k, &mut rng)).unwrap();
    }
    c.to_events()
}

/// Changes exactly one field of `e` to a different value.
fn mutate(e: &mut CustodyEvent, field: usize, rng: &mut impl Rng) {
    match field {
        0 => e.seq += rng.gen_range(1..1000),
        1 => e.device_id.push('x'),
        2 => e.location.x = (e.location.x + rng.gen_range(0.001..1.0)).min(1e6),
        3 => e.location.y += 1e-9 * f64::from(rng.gen_range(1u32..100)),
        4 => e.location.region = greengrid_core::model::RegionId::new("elsewhere"),
        5 => e.timestamp += rng.gen_range(1..10),
        6 => e.weight_kg += 0.001,
        7 => e.recipient_id = ActorId::new("mallory"),
        8 => {
            let others: Vec<_> = EventKind::ALL.into_iter().filter(|k| *k != e.event_kind).collect();
            e.event_kind = others[rng.gen_range(0..others.len())];
        }
        9 => {
            e.payload.insert(keys::POINTS.to_string(), "9999".to_string());
        }
        10 => {
            e.payload.insert("note".to_string(), String::new());
        }
        11 => e.prev_hash.0[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8),
        _ => e.this_hash.0[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8),
    }
}

const FIELDS: usize = 13;

#[test]
fn intact_chain_verifies_with_its_head() {
    let events = chain(200, 1);
    match verify_chain(&events) {
        Verification::Ok { length, head } => {
            assert_eq!(length, 200);
            assert_eq!(head, events[199].this_hash);
        }
        other => panic!("{other:?}"),
    }
    assert!(verify_chain::<CustodyEvent>(&[]).is_ok());
}

#[test]
fn single_field_mutation_is_located_exactly() {
    let events = chain(300, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..3000 {
        let i = rng.gen_range(0..events.len());
        let field = trial % FIELDS;
        let mut copy = events.clone();
        mutate(&mut copy[i], field, &mut rng);
        assert_ne!(copy[i], events[i]);
        assert_eq!(verify_chain(&copy).first_bad_seq(), Some(i as u64), "trial {trial} field {field} at {i}");
    }
}

#[test]
fn deletion_insertion_and_swap_are_located() {
    let events = chain(50, 4);
    let mut removed = events.clone();
    removed.remove(17);
    assert_eq!(
        verify_chain(&removed),
        Verification::Broken { first_bad_seq: 17, violation: Violation::SeqMismatch { expected: 17, found: 18 } }
    );
    let mut swapped = events.clone();
    swapped.swap(30, 31);
    assert_eq!(verify_chain(&swapped).first_bad_seq(), Some(30));
    let mut dup = events.clone();
    dup.insert(10, events[9].clone());
    assert_eq!(verify_chain(&dup).first_bad_seq(), Some(10));
}

#[test]
fn rehashed_forgery_breaks_the_next_link() {
    let events = chain(40, 5);
    let mut forged = events.clone();
    forged[12].weight_kg *= 2.0;
    forged[12].this_hash = forged[12].compute_hash();
    assert_eq!(
        verify_chain(&forged),
        Verification::Broken { first_bad_seq: 13, violation: Violation::PrevHashMismatch }
    );
}

#[test]
fn backdated_event_is_a_timestamp_regression() {
    let mut events = chain(10, 6);
    let mut prev = events[4].this_hash;
    events[5].timestamp = events[4].timestamp - 1;
    for e in events.iter_mut().skip(5) {
        e.prev_hash = prev;
        e.this_hash = e.compute_hash();
        prev = e.this_hash;
    }
    assert!(matches!(
        verify_chain(&events),
        Verification::Broken { first_bad_seq: 5, violation: Violation::TimestampRegression { .. } }
    ));
}

fn replicas(events: &[CustodyEvent], n: usize) -> Vec<LedgerReplica> {
    (0..n).map(|i| LedgerReplica::from_events(format!("r{i}"), ReplicaOwner::Ngo, events.to_vec())).collect()
}

/// A chain equal to `events` up to `at`, then re-sealed from a different
/// event at `at`. Locally valid.
fn fork(events: &[CustodyEvent], at: usize, seed: u64) -> Vec<CustodyEvent> {
    let mut out: Vec<CustodyEvent> = events[..at].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = out.last().map_or(Digest::GENESIS, |e| e.this_hash);
    let base_ts = out.last().map_or(0, |e| e.timestamp);
    for k in at..events.len() {
        let mut d = draft(k as u64, &mut rng);
        d.timestamp = d.timestamp.max(base_ts);
        let e = CustodyEvent::seal(d, k as u64, prev);
        prev = e.this_hash;
        out.push(e);
    }
    assert!(verify_chain(&out).is_ok());
    out
}

#[test]
fn audit_flags_truncation_divergence_and_tamper() {
    let events = chain(120, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..200 {
        let mut rs = replicas(&events, 5);
        let victim = rng.gen_range(0..5);
        let at = rng.gen_range(0..events.len());
        match trial % 3 {
            0 => rs[victim].truncate(at),
            1 => {
                rs[victim] =
                    LedgerReplica::from_events(format!("r{victim}"), ReplicaOwner::Ngo, fork(&events, at, trial))
            }
            _ => mutate(rs[victim].tamper(at).unwrap(), trial as usize % FIELDS, &mut rng),
        }
        let report = cross_audit(&rs).unwrap();
        assert_eq!(report.majority_head, Some(events.last().unwrap().this_hash), "trial {trial}");
        assert_eq!(report.agreeing.len(), 4);
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged_at(&format!("r{victim}")), Some(at as u64), "trial {trial}");
    }
}

#[test]
fn audit_with_two_faulty_replicas_keeps_the_majority() {
    let events = chain(60, 9);
    let mut rs = replicas(&events, 5);
    rs[1].truncate(20);
    rs[3] = LedgerReplica::from_events("r3", ReplicaOwner::Government, fork(&events, 45, 1));
    let report = cross_audit(&rs).unwrap();
    assert!(!report.no_quorum_head());
    assert_eq!(report.agreeing, ["r0", "r2", "r4"]);
    assert_eq!((report.flagged_at("r1"), report.flagged_at("r3")), (Some(20), Some(45)));
}

#[test]
fn all_distinct_heads_have_no_quorum() {
    let events = chain(30, 10);
    let three = vec![
        LedgerReplica::from_events("a", ReplicaOwner::Government, events.clone()),
        LedgerReplica::from_events("b", ReplicaOwner::Producer, fork(&events, 10, 1)),
        LedgerReplica::from_events("c", ReplicaOwner::Ngo, fork(&events, 20, 2)),
    ];
    let report = cross_audit(&three).unwrap();
    assert!(report.no_quorum_head());
    assert!(report.flagged.is_empty() && report.agreeing.is_empty());

    let mut five = replicas(&events, 5);
    five[0].truncate(25);
    five[1].truncate(25);
    five[2].truncate(10);
    assert!(cross_audit(&five).unwrap().no_quorum_head());
    assert!(cross_audit(&five[..1]).is_err());
}

#[test]
fn minority_outage_commits_and_majority_outage_rejects() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut c = cluster(5);
    for k in 0..10 {
        c.append(draft(k, &mut rng)).unwrap();
    }
    c.set_offline(0, true);
    c.set_offline(4, true);
    for k in 10..20 {
        c.append(draft(k, &mut rng)).unwrap();
    }
    assert_eq!(c.replicas()[0].len(), 10);
    c.set_offline(2, true);
    let head = c.head();
    let err = c.append(draft(20, &mut rng)).unwrap_err();
    assert_eq!(err, LedgerError::QuorumFailure { acks: 2, replicas: 5, needed: 3 });
    assert_eq!((c.len(), c.head()), (20, head));

    c.drop_next_acks(1, 1);
    c.drop_next_acks(3, 1);
    for i in [0, 2, 4] {
        c.set_offline(i, false);
    }
    c.append(draft(20, &mut rng)).unwrap();
    c.resync_online();
    assert!(c.cross_audit().unwrap().all_agree());
    assert!(c.verify().is_ok());
}

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden_ledger.ndjson");
const GOLDEN_HEAD: &str = "cb0ce60b68319421b7210f632a5750d9259655abafb3f6403d6d349946efc0ec";

fn golden_chain() -> Vec<CustodyEvent> {
    chain(12, 2024)
}

#[test]
fn golden_file_is_stable() {
    let text = std::fs::read_to_string(GOLDEN).unwrap();
    assert_eq!(file::to_string(&golden_chain()), text);
    match file::verify_file(Path::new(GOLDEN)).unwrap() {
        Verification::Ok { length, head } => {
            assert_eq!(length, 12);
            assert_eq!(head.to_hex(), GOLDEN_HEAD);
        }
        other => panic!("{other:?}"),
    }
}
