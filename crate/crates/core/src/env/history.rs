use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// One probe-then-serve slot as seen by a proposer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub t: usize,
    /// Probed beams in probing order.
    pub probes: Vec<usize>,
    /// Quantized reports in dB, aligned with `probes`.
    pub feedback_db: Vec<f64>,
    pub served: usize,
    /// Linear SNR of the served beam.
    pub executed_snr: f64,
}

/// The last `L` records, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    records: VecDeque<ProbeRecord>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history needs room for at least one slot");
        HistoryBuffer { capacity, records: VecDeque::with_capacity(capacity) }
    }

    pub fn from_records(capacity: usize, records: impl IntoIterator<Item = ProbeRecord>) -> Self {
        let mut h = Self::new(capacity);
        for r in records {
            h.push(r);
        }
        h
    }

    pub fn push(&mut self, record: ProbeRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &ProbeRecord> {
        self.records.iter()
    }

    /// Newest to oldest: `t−1, t−2, …`.
    pub fn newest_first(&self) -> impl Iterator<Item = &ProbeRecord> {
        self.records.iter().rev()
    }

    pub fn latest(&self) -> Option<&ProbeRecord> {
        self.records.back()
    }
}

/// Round-robin sweep: warmup slot `i` probes `(i·P + j) mod K`, `j < P`.
pub fn warmup_probes(slot: usize, probes: usize, n_beams: usize) -> Vec<usize> {
    (0..probes).map(|j| (slot * probes + j) % n_beams).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: usize) -> ProbeRecord {
        ProbeRecord { t, probes: vec![t % 4], feedback_db: vec![0.0], served: t % 4, executed_snr: 1.0 }
    }

    #[test]
    fn warmup_enumeration() {
        let slots: Vec<_> = (0..4).map(|i| warmup_probes(i, 2, 8)).collect();
        assert_eq!(slots, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
        let ident: Vec<_> = (0..5).map(|i| warmup_probes(i, 1, 5)[0]).collect();
        assert_eq!(ident, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn full_size_warmup_probes_each_beam_once() {
        let mut count = vec![0; 128];
        for i in 0..32 {
            for b in warmup_probes(i, 4, 128) {
                count[b] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }

    proptest! {
        #[test]
        fn buffer_keeps_last_l_in_order(cap in 1usize..6, n in 0usize..30) {
            let mut h = HistoryBuffer::new(cap);
            for t in 0..n {
                h.push(rec(t));
                prop_assert!(h.len() <= cap);
            }
            let ts: Vec<_> = h.iter().map(|r| r.t).collect();
            let expect: Vec<_> = (n.saturating_sub(cap)..n).collect();
            prop_assert_eq!(ts, expect);
            let newest: Vec<_> = h.newest_first().map(|r| r.t).collect();
            prop_assert_eq!(newest, (n.saturating_sub(cap)..n).rev().collect::<Vec<_>>());
        }
    }
}
