//! Prioritized experience replay: a ring buffer of transitions with a
//! Fenwick tree over priority^alpha so sampling and priority updates are
//! both O(log capacity).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Priority floor added to |TD error| so no stored transition starves.
pub const PRIORITY_FLOOR: f64 = 1e-3;

/// One environment step. Solutions are stored as sorted vertex lists (not
/// 0/1 indicators) so the regularized branch can rebuild the state and its
/// shifted affinity on demand.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transition {
    pub state: Vec<u16>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<u16>,
    pub done: bool,
    /// Index of the owning instance in the training dataset.
    pub instance: usize,
    pub priority: f64,
}

/// Serializable contents of a [`ReplayMemory`] (everything but the Fenwick
/// tree, which is rebuilt on restore).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplaySnapshot {
    pub transitions: Vec<Transition>,
    pub ids: Vec<u64>,
    pub next_id: u64,
    pub max_priority: f64,
}

pub struct ReplayMemory {
    capacity: usize,
    alpha: f64,
    buf: Vec<Transition>,
    /// Global id per slot; id k always lives in slot k % capacity, which
    /// makes stale-update detection a single comparison.
    ids: Vec<u64>,
    next_id: u64,
    max_priority: f64,
    /// One-indexed Fenwick tree over priority^alpha.
    tree: Vec<f64>,
}

impl ReplayMemory {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        assert!(alpha >= 0.0, "priority exponent must be non-negative");
        ReplayMemory {
            capacity,
            alpha,
            buf: Vec::new(),
            ids: Vec::new(),
            next_id: 0,
            max_priority: 0.0,
            tree: vec![0.0; capacity + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Store a transition with the running maximum priority (1 when the
    /// memory has never seen one) so it is sampled at least once; the
    /// oldest entry is evicted at capacity. Returns the transition's id.
    pub fn push(&mut self, mut t: Transition) -> u64 {
        let id = self.next_id;
        let slot = (id % self.capacity as u64) as usize;
        t.priority = if self.max_priority > 0.0 {
            self.max_priority
        } else {
            1.0
        };
        self.max_priority = t.priority;
        let weight = t.priority.powf(self.alpha);
        if slot == self.buf.len() {
            self.tree_add(slot, weight);
            self.buf.push(t);
            self.ids.push(id);
        } else {
            self.tree_add(slot, weight - self.buf[slot].priority.powf(self.alpha));
            self.buf[slot] = t;
            self.ids[slot] = id;
        }
        self.next_id += 1;
        id
    }

    /// Draw `batch` ids i.i.d. with replacement, each with probability
    /// priority^alpha / sum of priority^alpha.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
        if self.buf.is_empty() {
            return Err(Error::Contract("sample from an empty replay".into()));
        }
        let total = self.tree_total();
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let slot = self.tree_find(rng.gen::<f64>() * total);
            out.push(self.ids[slot]);
        }
        Ok(out)
    }

    /// The transition behind a sampled id, if it has not been evicted.
    pub fn get(&self, id: u64) -> Option<&Transition> {
        let slot = (id % self.capacity as u64) as usize;
        (slot < self.buf.len() && self.ids[slot] == id).then(|| &self.buf[slot])
    }

    /// Re-prioritize to |tdError| + floor. Ids that have been evicted since
    /// sampling are ignored; returns whether the update landed.
    pub fn update_priority(&mut self, id: u64, td_error: f64) -> bool {
        let slot = (id % self.capacity as u64) as usize;
        if slot >= self.buf.len() || self.ids[slot] != id {
            log::debug!("replay priority update for evicted transition {id} ignored");
            return false;
        }
        let p = td_error.abs() + PRIORITY_FLOOR;
        let old = self.buf[slot].priority;
        self.buf[slot].priority = p;
        self.tree_add(slot, p.powf(self.alpha) - old.powf(self.alpha));
        if p > self.max_priority {
            self.max_priority = p;
        }
        true
    }

    pub fn snapshot(&self) -> ReplaySnapshot {
        ReplaySnapshot {
            transitions: self.buf.clone(),
            ids: self.ids.clone(),
            next_id: self.next_id,
            max_priority: self.max_priority,
        }
    }

    pub fn restore(capacity: usize, alpha: f64, snap: ReplaySnapshot) -> Result<Self> {
        if snap.transitions.len() > capacity || snap.transitions.len() != snap.ids.len() {
            return Err(Error::Config(
                "replay snapshot does not fit the configured capacity".into(),
            ));
        }
        let mut mem = ReplayMemory::new(capacity, alpha);
        mem.next_id = snap.next_id;
        mem.max_priority = snap.max_priority;
        for (slot, t) in snap.transitions.iter().enumerate() {
            mem.tree_add(slot, t.priority.powf(alpha));
        }
        mem.buf = snap.transitions;
        mem.ids = snap.ids;
        Ok(mem)
    }

    fn tree_add(&mut self, slot: usize, delta: f64) {
        let mut i = slot + 1;
        while i <= self.capacity {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn tree_total(&self) -> f64 {
        let mut acc = 0.0;
        let mut i = self.buf.len();
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }

    /// Slot of the first prefix sum exceeding `target`.
    fn tree_find(&self, mut target: f64) -> usize {
        let mut pos = 0usize;
        let mut bit = self.capacity.next_power_of_two();
        if bit > self.capacity {
            bit >>= 1;
        }
        while bit > 0 {
            let next = pos + bit;
            if next <= self.capacity && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            bit >>= 1;
        }
        pos.min(self.buf.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(tag: u16) -> Transition {
        Transition {
            state: vec![tag],
            action: tag as usize,
            reward: 0.0,
            next_state: vec![tag, tag + 1],
            done: false,
            instance: 0,
            priority: 0.0,
        }
    }

    #[test]
    fn push_assigns_max_priority() {
        let mut mem = ReplayMemory::new(8, 0.6);
        let id0 = mem.push(t(0));
        assert_eq!(mem.len(), 1);
        assert_eq!(mem.get(id0).unwrap().priority, 1.0);

        assert!(mem.update_priority(id0, -4.999));
        assert!((mem.get(id0).unwrap().priority - 5.0).abs() < 1e-12);
        let id1 = mem.push(t(1));
        assert!((mem.get(id1).unwrap().priority - 5.0).abs() < 1e-12);
    }

    #[test]
    fn priority_floor_applies() {
        let mut mem = ReplayMemory::new(4, 1.0);
        let id = mem.push(t(0));
        mem.update_priority(id, 0.0);
        assert_eq!(mem.get(id).unwrap().priority, PRIORITY_FLOOR);
        mem.update_priority(id, -2.0);
        assert!((mem.get(id).unwrap().priority - 2.001).abs() < 1e-12);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut mem = ReplayMemory::new(2, 1.0);
        let id0 = mem.push(t(0));
        let id1 = mem.push(t(1));
        let id2 = mem.push(t(2));
        assert_eq!(mem.len(), 2);
        assert!(mem.get(id0).is_none());
        assert_eq!(mem.get(id1).unwrap().state, vec![1]);
        assert_eq!(mem.get(id2).unwrap().state, vec![2]);

        // A stale priority update is ignored without disturbing the slot's
        // current occupant.
        assert!(!mem.update_priority(id0, 9.0));
        assert_eq!(mem.get(id2).unwrap().priority, 1.0);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let mem = ReplayMemory::new(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            mem.sample(1, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    fn sampling_frequency(alpha: f64, priorities: [f64; 2], draws: usize) -> f64 {
        let mut mem = ReplayMemory::new(4, alpha);
        let a = mem.push(t(0));
        let b = mem.push(t(1));
        mem.update_priority(a, priorities[0] - PRIORITY_FLOOR);
        mem.update_priority(b, priorities[1] - PRIORITY_FLOOR);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ids = mem.sample(draws, &mut rng).unwrap();
        ids.iter().filter(|&&id| id == b).count() as f64 / draws as f64
    }

    #[test]
    fn sampling_follows_priority_distribution() {
        // p = [1, 3], alpha = 1: P(second) = 0.75.
        let freq = sampling_frequency(1.0, [1.0, 3.0], 100_000);
        assert!((0.74..=0.76).contains(&freq), "{freq}");
    }

    #[test]
    fn alpha_zero_samples_uniformly() {
        let freq = sampling_frequency(0.0, [1.0, 3.0], 100_000);
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut mem = ReplayMemory::new(3, 0.6);
        for i in 0..5 {
            mem.push(t(i));
        }
        mem.update_priority(4, 2.5);
        let snap = mem.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: ReplaySnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);

        let restored = ReplayMemory::restore(3, 0.6, back).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            mem.sample(64, &mut rng_a).unwrap(),
            restored.sample(64, &mut rng_b).unwrap()
        );
        assert!(!ReplayMemory::restore(1, 0.6, mem.snapshot()).is_ok());
    }
}
