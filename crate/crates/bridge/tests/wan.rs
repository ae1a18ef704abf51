//! Emulated wide-area link timing and loss.

use std::collections::BTreeSet;
use std::time::Instant;

use carl_bridge::{wan_channel, WanLinkConfig};
use tokio::time::{sleep, Duration};

#[tokio::test]
async fn identity_link_adds_under_a_millisecond() {
    let (tx, mut rx) = wan_channel::<Instant>(WanLinkConfig::default()).unwrap();
    let mut worst = Duration::ZERO;
    for _ in 0..200 {
        tx.send(Instant::now()).unwrap();
        let sent = rx.recv().await.unwrap();
        worst = worst.max(sent.elapsed());
    }
    assert!(worst < Duration::from_millis(1), "worst {worst:?}");
}

#[tokio::test]
async fn latency_is_applied_within_the_jitter_bound() {
    let cfg = WanLinkConfig {
        latency_ms: 480.0,
        jitter_ms: 100.0,
        drop: 0.0,
        seed: 11,
    };
    let (tx, mut rx) = wan_channel::<(u32, Instant)>(cfg).unwrap();
    let sender = tokio::spawn(async move {
        for k in 0..100u32 {
            tx.send((k, Instant::now())).unwrap();
            sleep(Duration::from_millis(5)).await;
        }
    });
    let mut last = None;
    for _ in 0..100 {
        let (k, sent) = rx.recv().await.unwrap();
        let delay = sent.elapsed().as_secs_f64() * 1000.0;
        // Timer granularity adds a little on top of the schedule.
        assert!((480.0..=580.0 + 15.0).contains(&delay), "message {k} took {delay:.1} ms");
        if let Some(prev) = last {
            assert!(k > prev, "reordered");
        }
        last = Some(k);
    }
    sender.await.unwrap();
}

async fn survivors(seed: u64) -> BTreeSet<u32> {
    let cfg = WanLinkConfig {
        latency_ms: 0.0,
        jitter_ms: 0.0,
        drop: 0.5,
        seed,
    };
    let (tx, mut rx) = wan_channel::<u32>(cfg).unwrap();
    for k in 0..10_000u32 {
        tx.send(k).unwrap();
    }
    drop(tx);
    let mut out = Vec::new();
    while let Some(k) = rx.recv().await {
        out.push(k);
    }
    assert!(out.windows(2).all(|w| w[1] > w[0]), "reordered");
    out.into_iter().collect()
}

#[tokio::test]
async fn seeded_loss_is_near_half_and_reproducible() {
    let a = survivors(42).await;
    assert!((4850..=5150).contains(&a.len()), "delivered {}", a.len());
    assert_eq!(a, survivors(42).await);
    assert_ne!(a, survivors(43).await);
}
