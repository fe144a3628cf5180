use rand::seq::index;
use rand::Rng;
use voltmesh_nn::Matrix;

/// One joint transition in network coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Concatenated per-agent features.
    pub obs: Vec<f64>,
    /// Concatenated per-agent actions.
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Adds a transition, evicting the oldest when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices of `batch` distinct stored transitions.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        index::sample(rng, self.items.len(), batch.min(self.items.len())).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Minibatch {
        let idx = self.sample_indices(batch, rng);
        Minibatch::from_transitions(idx.iter().map(|&i| &self.items[i]))
    }
}

/// A sampled batch laid out row-per-transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Matrix,
    pub next_obs: Matrix,
    pub done: Vec<bool>,
}

impl Minibatch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Self {
        let items: Vec<&Transition> = items.into_iter().collect();
        let rows = |f: &dyn Fn(&Transition) -> &[f64]| {
            Matrix::from_rows(&items.iter().map(|t| f(t)).collect::<Vec<_>>()).expect("uniform transition widths")
        };
        Self {
            obs: rows(&|t| &t.obs),
            actions: rows(&|t| &t.actions),
            rewards: rows(&|t| &t.rewards),
            next_obs: rows(&|t| &t.next_obs),
            done: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(x: f64) -> Transition {
        Transition { obs: vec![x], actions: vec![x], rewards: vec![x], next_obs: vec![x], done: false }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(t(k as f64));
        }
        let mut held: Vec<f64> = (0..3).map(|i| b.get(i).obs[0]).collect();
        held.sort_by(f64::total_cmp);
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn minibatch_has_distinct_rows() {
        let mut b = ReplayBuffer::new(50);
        for k in 0..50 {
            b.push(t(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mb = b.sample(20, &mut rng);
        let mut v: Vec<f64> = mb.obs.as_slice().to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        assert_eq!(v.len(), 20);
        assert_eq!(b.sample(80, &mut rng).len(), 50);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(100);
        for k in 0..100 {
            b.push(t(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 100];
        for _ in 0..10_000 {
            for i in b.sample_indices(10, &mut rng) {
                counts[i] += 1;
            }
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Upper 0.1% point of the chi-square distribution with 99 degrees of freedom.
        assert!(chi2 < 148.23, "chi-square {chi2}");
    }
}
