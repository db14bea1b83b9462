use rand::seq::index;
use rand::Rng;

/// One environment step as stored for off-policy updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub prev_action: Vec<f64>,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// Transitions stacked row-wise for a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub prev_action: Vec<f64>,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Self {
        let mut b = Batch {
            size: 0,
            prev_action: Vec::new(),
            obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
        };
        for t in items {
            b.size += 1;
            b.prev_action.extend_from_slice(&t.prev_action);
            b.obs.extend_from_slice(&t.obs);
            b.action.extend_from_slice(&t.action);
            b.reward.push(t.reward);
            b.next_obs.extend_from_slice(&t.next_obs);
        }
        b
    }
}

/// Fixed-capacity ring buffer; the oldest record is overwritten when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Distinct indices drawn uniformly; `None` while fewer than `m` records exist.
    pub fn sample_indices(&self, rng: &mut impl Rng, m: usize) -> Option<Vec<usize>> {
        if m == 0 || self.items.len() < m {
            return None;
        }
        Some(index::sample(rng, self.items.len(), m).into_vec())
    }

    pub fn sample(&self, rng: &mut impl Rng, m: usize) -> Option<Batch> {
        let idx = self.sample_indices(rng, m)?;
        Some(Batch::from_transitions(idx.iter().map(|&i| &self.items[i])))
    }
}
