use std::f64::consts::PI;

use super::{gauss_legendre, hg_phase, OpticalMedium};
use crate::error::{Error, Result};

const FOUR_PI: f64 = 4.0 * PI;
const AZIMUTH_POINTS: usize = 256;

/// Discrete ordinates for slab geometry: direction cosines μ against the depth axis
/// with solid-angle weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    mu: Vec<f64>,
    weights: Vec<f64>,
}

impl DirectionSet {
    /// Gauss–Legendre ordinates with `per_hemisphere` points on each side of μ = 0.
    pub fn gauss(per_hemisphere: usize) -> Self {
        let (mu, w) = gauss_legendre(2 * per_hemisphere);
        let weights = w.iter().map(|w| 2.0 * PI * w).collect();
        Self { mu, weights }
    }

    /// A single forward direction carrying the whole sphere's weight.
    pub fn forward_only() -> Self {
        Self {
            mu: vec![1.0],
            weights: vec![FOUR_PI],
        }
    }

    pub fn new(mu: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if mu.len() != weights.len() || mu.is_empty() {
            return Err(Error::Dimension(format!(
                "{} direction cosines vs {} weights",
                mu.len(),
                weights.len()
            )));
        }
        if mu.iter().any(|m| !(-1.0..=1.0).contains(m)) {
            return Err(Error::Domain("direction cosine outside [-1, 1]".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - FOUR_PI).abs() > 1e-9 {
            return Err(Error::Domain(format!("quadrature weights sum to {total}, not 4π")));
        }
        Ok(Self { mu, weights })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for DirectionSet {
    fn default() -> Self {
        Self::gauss(8)
    }
}

/// Azimuthally averaged phase function between every pair of ordinates, with rows
/// rescaled so that `(1/4π) Σ_j w_j K_ij = 1` holds exactly on the discrete set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringKernel {
    n: usize,
    values: Vec<f64>,
}

impl ScatteringKernel {
    pub fn new(dirs: &DirectionSet, g: f64) -> Self {
        let n = dirs.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let (mi, si) = (dirs.mu[i], (1.0 - dirs.mu[i] * dirs.mu[i]).max(0.0).sqrt());
            for j in 0..n {
                let (mj, sj) = (dirs.mu[j], (1.0 - dirs.mu[j] * dirs.mu[j]).max(0.0).sqrt());
                let mut acc = 0.0;
                for k in 0..AZIMUTH_POINTS {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / AZIMUTH_POINTS as f64;
                    let c = (mi * mj + si * sj * phi.cos()).clamp(-1.0, 1.0);
                    acc += hg_phase(g, c);
                }
                values[i * n + j] = acc / AZIMUTH_POINTS as f64;
            }
            let norm: f64 = (0..n)
                .map(|j| dirs.weights[j] * values[i * n + j])
                .sum::<f64>()
                / FOUR_PI;
            for j in 0..n {
                values[i * n + j] /= norm;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// `(1/4π) Σ_j w_j K_ij I_j` for one depth row.
    fn in_scatter(&self, dirs: &DirectionSet, row: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let k = &self.values[i * self.n..(i + 1) * self.n];
            *o = k
                .iter()
                .zip(&dirs.weights)
                .zip(row)
                .map(|((k, w), v)| k * w * v)
                .sum::<f64>()
                / FOUR_PI;
        }
    }
}

/// Radiance and source sampled on a depth grid × direction set, stored row-major by depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    depth: Vec<f64>,
    directions: DirectionSet,
    radiance: Vec<f64>,
    source: Vec<f64>,
}

impl RadianceField {
    pub fn new(
        depth: Vec<f64>,
        directions: DirectionSet,
        radiance: Vec<f64>,
        source: Vec<f64>,
    ) -> Result<Self> {
        let size = depth.len() * directions.len();
        if radiance.len() != size || source.len() != size {
            return Err(Error::Dimension(format!(
                "field needs {size} values, got radiance {} and source {}",
                radiance.len(),
                source.len()
            )));
        }
        if depth.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Domain("depth grid must be strictly increasing".into()));
        }
        if radiance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("radiance values must be non-negative".into()));
        }
        Ok(Self {
            depth,
            directions,
            radiance,
            source,
        })
    }

    /// Field with `radiance(x, μ)` and zero source on a uniform grid over `[0, length]`.
    pub fn from_fn(
        length: f64,
        nodes: usize,
        directions: DirectionSet,
        radiance: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let depth = uniform_grid(length, nodes)?;
        let mut values = Vec::with_capacity(nodes * directions.len());
        for &x in &depth {
            for &m in directions.mu() {
                values.push(radiance(x, m));
            }
        }
        let source = vec![0.0; values.len()];
        Self::new(depth, directions, values, source)
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn radiance(&self) -> &[f64] {
        &self.radiance
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn at(&self, node: usize, dir: usize) -> f64 {
        self.radiance[node * self.directions.len() + dir]
    }
}

fn uniform_grid(length: f64, nodes: usize) -> Result<Vec<f64>> {
    if nodes < 2 || !(length > 0.0) {
        return Err(Error::Dimension(format!(
            "grid needs ≥ 2 nodes and positive length (got {nodes}, {length})"
        )));
    }
    let h = length / (nodes - 1) as f64;
    Ok((0..nodes).map(|k| k as f64 * h).collect())
}

/// Steady-state slab RTE residual at every interior node, row-major by node.
pub fn rte_residual(field: &RadianceField, m: &OpticalMedium) -> Result<Vec<f64>> {
    let kernel = ScatteringKernel::new(&field.directions, m.g);
    rte_residual_with_kernel(field, m.mu_a, m.mu_s, &kernel)
}

/// As [`rte_residual`] with a precomputed kernel.
pub fn rte_residual_with_kernel(
    field: &RadianceField,
    mu_a: f64,
    mu_s: f64,
    kernel: &ScatteringKernel,
) -> Result<Vec<f64>> {
    let nx = field.depth.len();
    let nd = field.directions.len();
    if nx < 3 {
        return Err(Error::Dimension(format!(
            "RTE residual needs ≥ 3 depth points, got {nx}"
        )));
    }
    if kernel.len() != nd {
        return Err(Error::Dimension(format!(
            "kernel built for {} directions, field has {nd}",
            kernel.len()
        )));
    }
    let mut out = Vec::with_capacity((nx - 2) * nd);
    let mut scatter = vec![0.0; nd];
    for k in 1..nx - 1 {
        let row = &field.radiance[k * nd..(k + 1) * nd];
        kernel.in_scatter(&field.directions, row, &mut scatter);
        let span = field.depth[k + 1] - field.depth[k - 1];
        for j in 0..nd {
            let grad = (field.radiance[(k + 1) * nd + j] - field.radiance[(k - 1) * nd + j]) / span;
            let r = field.directions.mu[j] * grad + (mu_a + mu_s) * row[j]
                - mu_s * scatter[j]
                - field.source[k * nd + j];
            out.push(r);
        }
    }
    Ok(out)
}

/// Solves the source-free slab problem on `[0, length]` with uniform incoming radiance
/// `incoming` on the front face and vacuum at the back, by diamond-difference sweeps and
/// source iteration.
pub fn solve_slab(
    m: &OpticalMedium,
    kernel: &ScatteringKernel,
    directions: &DirectionSet,
    length: f64,
    nodes: usize,
    incoming: f64,
) -> Result<RadianceField> {
    let depth = uniform_grid(length, nodes)?;
    let nd = directions.len();
    if kernel.len() != nd {
        return Err(Error::Dimension("kernel/direction mismatch".into()));
    }
    if directions.mu.iter().any(|m| *m == 0.0) {
        return Err(Error::Domain("slab sweep cannot handle μ = 0".into()));
    }
    let h = length / (nodes - 1) as f64;
    let sigma_t = m.mu_a + m.mu_s;
    let mut psi = vec![0.0; nodes * nd];
    let mut q = vec![0.0; nodes * nd];
    let mut scratch = vec![0.0; nd];
    let mut converged = false;
    for _ in 0..5000 {
        for k in 0..nodes {
            kernel.in_scatter(directions, &psi[k * nd..(k + 1) * nd], &mut scratch);
            for j in 0..nd {
                q[k * nd + j] = m.mu_s * scratch[j];
            }
        }
        let mut change: f64 = 0.0;
        for j in 0..nd {
            let mu = directions.mu[j];
            let a = mu.abs() / h;
            let (lo, hi) = (a - 0.5 * sigma_t, a + 0.5 * sigma_t);
            let step = |prev: f64, q0: f64, q1: f64| ((lo * prev + 0.5 * (q0 + q1)) / hi).max(0.0);
            if mu > 0.0 {
                let mut prev = incoming;
                change = change.max((psi[j] - prev).abs());
                psi[j] = prev;
                for k in 1..nodes {
                    let next = step(prev, q[(k - 1) * nd + j], q[k * nd + j]);
                    change = change.max((psi[k * nd + j] - next).abs());
                    psi[k * nd + j] = next;
                    prev = next;
                }
            } else {
                let mut prev = 0.0;
                psi[(nodes - 1) * nd + j] = prev;
                for k in (0..nodes - 1).rev() {
                    let next = step(prev, q[(k + 1) * nd + j], q[k * nd + j]);
                    change = change.max((psi[k * nd + j] - next).abs());
                    psi[k * nd + j] = next;
                    prev = next;
                }
            }
        }
        if change <= 1e-11 * incoming.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Solver("slab source iteration did not converge".into()));
    }
    RadianceField::new(depth, directions.clone(), psi, vec![0.0; nodes * nd])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    #[test]
    fn default_ordinates_weights() {
        let d = DirectionSet::default();
        assert_eq!(d.len(), 16);
        assert!((d.weights().iter().sum::<f64>() - FOUR_PI).abs() < 1e-9);
        assert!(d.weights().iter().all(|w| *w > 0.0));
        assert_eq!(d.mu().iter().filter(|m| **m > 0.0).count(), 8);
    }

    #[test]
    fn zero_field_zero_residual() {
        let m = OpticalMedium::new(0.3, 12.0, 0.9, 1.0).unwrap();
        let f = RadianceField::from_fn(1.0, 9, DirectionSet::default(), |_, _| 0.0).unwrap();
        assert!(rte_residual(&f, &m).unwrap().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn too_few_nodes() {
        let m = OpticalMedium::new(0.3, 0.0, 0.0, 1.0).unwrap();
        let f = RadianceField::from_fn(1.0, 2, DirectionSet::forward_only(), |_, _| 1.0).unwrap();
        assert!(matches!(rte_residual(&f, &m), Err(Error::Dimension(_))));
    }

    fn beer_lambert_residual(nodes: usize, dirs: DirectionSet) -> f64 {
        let mu_a = 1.3;
        let m = OpticalMedium::new(mu_a, 0.0, 0.0, 1.0).unwrap();
        let f = RadianceField::from_fn(2.0, nodes, dirs, |x, mu| (-mu_a * x / mu).exp()).unwrap();
        max_abs(&rte_residual(&f, &m).unwrap())
    }

    #[test]
    fn analytic_solution_second_order() {
        let coarse = beer_lambert_residual(41, DirectionSet::forward_only());
        let fine = beer_lambert_residual(81, DirectionSet::forward_only());
        let ratio = coarse / fine;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        // oracle: central-difference truncation error h²/6 · |I'''|
        let h: f64 = 2.0 / 40.0;
        let bound = h * h / 6.0 * 1.3f64.powi(3);
        assert!(beer_lambert_residual(41, DirectionSet::forward_only()) <= bound * 1.0001);
    }

    #[test]
    fn isotropic_scatter_cancels() {
        let (mu_a, mu_s) = (0.4, 25.0);
        let m = OpticalMedium::new(mu_a, mu_s, 0.0, 1.0).unwrap();
        let f = RadianceField::from_fn(1.0, 11, DirectionSet::default(), |x, _| 1.0 + x * x)
            .unwrap();
        let r = rte_residual(&f, &m).unwrap();
        let nd = f.directions().len();
        for (idx, v) in r.iter().enumerate() {
            let k = idx / nd + 1;
            let j = idx % nd;
            let x = f.depth()[k];
            let expected = f.directions().mu()[j] * 2.0 * x + mu_a * (1.0 + x * x);
            assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        }
    }

    #[test]
    fn kernel_rows_normalized() {
        let d = DirectionSet::default();
        for g in [0.0, 0.5, 0.9] {
            let k = ScatteringKernel::new(&d, g);
            for i in 0..d.len() {
                let s: f64 = (0..d.len()).map(|j| d.weights()[j] * k.get(i, j)).sum();
                assert!((s / FOUR_PI - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slab_solution_is_near_residual_free() {
        let m = OpticalMedium::new(0.5, 15.0, 0.9, 1.0).unwrap();
        let d = DirectionSet::default();
        let k = ScatteringKernel::new(&d, m.g);
        let coarse = solve_slab(&m, &k, &d, 1.0, 33, 1.0).unwrap();
        let fine = solve_slab(&m, &k, &d, 1.0, 65, 1.0).unwrap();
        assert!(coarse.radiance().iter().all(|v| *v >= 0.0));
        let rc = max_abs(&rte_residual_with_kernel(&coarse, m.mu_a, m.mu_s, &k).unwrap());
        let rf = max_abs(&rte_residual_with_kernel(&fine, m.mu_a, m.mu_s, &k).unwrap());
        assert!(rf < rc, "{rf} !< {rc}");
        let scale = (m.mu_a + m.mu_s) * max_abs(coarse.radiance());
        assert!(rc < 0.05 * scale, "{rc} vs {scale}");
    }

    #[test]
    fn pure_absorber_slab_matches_exponential() {
        let m = OpticalMedium::new(0.8, 0.0, 0.0, 1.0).unwrap();
        let d = DirectionSet::default();
        let k = ScatteringKernel::new(&d, 0.0);
        let f = solve_slab(&m, &k, &d, 1.0, 201, 1.0).unwrap();
        for (j, &mu) in d.mu().iter().enumerate() {
            if mu > 0.0 {
                let got = f.at(200, j);
                let want = (-0.8 / mu).exp();
                assert!((got - want).abs() < 5e-3 * want, "{got} vs {want}");
            } else {
                assert_eq!(f.at(200, j), 0.0);
            }
        }
    }
}
