use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// A deterministic random stream identified by a root seed and a label path.
///
/// The generator state is a ChaCha20 keyed by `SHA-256(root_seed || label)`, so any
/// substream can be re-derived from its label alone, independent of how many draws
/// were taken from its parent or in which order siblings were derived.
#[derive(Debug, Clone)]
pub struct RandomStream {
    root_seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

impl RandomStream {
    /// The root stream of a run.
    pub fn new(root_seed: u64) -> Self {
        Self::keyed(root_seed, String::new())
    }

    fn keyed(root_seed: u64, label: String) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(root_seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            root_seed,
            label,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    /// Derive a child stream. `label` must be nonempty; the child label path is
    /// `parent/label`.
    pub fn derive(&self, label: &str) -> Self {
        assert!(!label.is_empty(), "substream label must be nonempty");
        let path = if self.label.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.label, label)
        };
        Self::keyed(self.root_seed, path)
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.rng.random_range(0..n)
    }

    /// Gaussian draw. A zero standard deviation returns `mean` exactly.
    pub fn gaussian(&mut self, mean: f64, sd: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        if sd == 0.0 {
            mean
        } else {
            mean + sd * z
        }
    }

    /// Log-uniform draw in `[lo, hi)`, both positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo.ln(), hi.ln()).exp()
    }

    /// Triangular distribution on `[lo, hi]` with the given mode.
    pub fn triangular(&mut self, lo: f64, mode: f64, hi: f64) -> f64 {
        let u = self.uniform01();
        let split = (mode - lo) / (hi - lo);
        if u < split {
            lo + ((hi - lo) * (mode - lo) * u).sqrt()
        } else {
            hi - ((hi - lo) * (hi - mode) * (1.0 - u)).sqrt()
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(s: &mut RandomStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| s.uniform01()).collect()
    }

    #[test]
    fn same_label_same_sequence() {
        let root = RandomStream::new(42);
        let a = draws(&mut root.derive("x"), 100);
        let b = draws(&mut root.derive("x"), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_labels_differ() {
        let root = RandomStream::new(42);
        let a = draws(&mut root.derive("a"), 100);
        let b = draws(&mut root.derive("b"), 100);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn derivation_ignores_parent_draw_state() {
        let root = RandomStream::new(7);
        let mut used = root.clone();
        let _ = draws(&mut used, 13);
        let a = draws(&mut root.derive("subject").derive("3"), 10);
        let b = draws(&mut used.derive("subject").derive("3"), 10);
        assert_eq!(a, b);
        assert_eq!(root.derive("subject").derive("3").label(), "subject/3");
    }

    #[test]
    fn degenerate_gaussian_is_exact() {
        let mut s = RandomStream::new(1);
        for _ in 0..50 {
            assert_eq!(s.gaussian(0.0, 0.0), 0.0);
            assert_eq!(s.gaussian(3.5, 0.0), 3.5);
        }
    }

    #[test]
    fn triangular_stays_in_support() {
        let mut s = RandomStream::new(9);
        for _ in 0..10_000 {
            let x = s.triangular(0.5, 1.5, 4.0);
            assert!((0.5..=4.0).contains(&x));
        }
    }

    #[test]
    fn moments_are_plausible() {
        let mut s = RandomStream::new(3);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| s.gaussian(1.0, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.05);
        assert!((var.sqrt() - 2.0).abs() < 0.05);
    }
}
