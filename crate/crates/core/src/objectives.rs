//! Local objectives `f_i`, gradient noise, the centralized baseline and the
//! reference optimum.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Data points per node in the SVM suite.
pub const POINTS_PER_NODE: usize = 50;
/// Stopping threshold of the reference solver.
pub const REFERENCE_GRADIENT_TOLERANCE: f64 = 1e-10;
const REFERENCE_MAX_ITERATIONS: usize = 1_000_000;

/// `h(ξ) = 0.5 − ξ` for `ξ ≤ 0`, `0.5(1−ξ)²` on `(0, 1)`, `0` beyond.
pub fn smoothed_hinge(xi: f64) -> f64 {
    if xi <= 0.0 {
        0.5 - xi
    } else if xi < 1.0 {
        0.5 * (1.0 - xi) * (1.0 - xi)
    } else {
        0.0
    }
}

pub fn smoothed_hinge_derivative(xi: f64) -> f64 {
    if xi <= 0.0 {
        -1.0
    } else if xi < 1.0 {
        xi - 1.0
    } else {
        0.0
    }
}

/// `f_i(z) = (μ_i/2)‖z − c_i‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    pub mu: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

impl QuadraticObjective {
    pub fn new(mu: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if mu.is_empty() || mu.len() != centers.len() {
            return Err(Error::config(format!("{} curvatures for {} centers", mu.len(), centers.len())));
        }
        if mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::config("quadratic curvatures must be positive and finite"));
        }
        let d = centers[0].len();
        if d == 0 || centers.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::config("quadratic centers must be finite and share a positive dimension"));
        }
        Ok(QuadraticObjective { mu, centers })
    }

    /// Curvatures uniform on `mu_range`, centers uniform on `[-scale, scale]^d`.
    pub fn random(n: usize, dim: usize, mu_range: [f64; 2], center_scale: f64, rng: &mut Stream) -> Result<Self> {
        let mu = (0..n).map(|_| rng.uniform(mu_range[0], mu_range[1])).collect();
        let centers = (0..n).map(|_| (0..dim).map(|_| rng.uniform(-center_scale, center_scale)).collect()).collect();
        Self::new(mu, centers)
    }

    /// `Σ μ_i c_i / Σ μ_i`.
    pub fn optimum(&self) -> Vec<f64> {
        let total: f64 = self.mu.iter().sum();
        let d = self.centers[0].len();
        (0..d).map(|c| self.mu.iter().zip(&self.centers).map(|(m, x)| m * x[c]).sum::<f64>() / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmPoint {
    pub node: usize,
    pub features: [f64; 2],
    pub label: f64,
}

/// Two Gaussian clusters per node: 25 points around (1,1) labelled −1 and
/// 25 around (3,3) labelled +1, identity covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDataset {
    pub n: usize,
    pub points: Vec<SvmPoint>,
}

impl SvmDataset {
    pub fn generate(n: usize, rng: &mut Stream) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("dataset needs at least one node"));
        }
        let half = POINTS_PER_NODE / 2;
        let mut points = Vec::with_capacity(n * POINTS_PER_NODE);
        for node in 0..n {
            for (center, label) in [(1.0, -1.0), (3.0, 1.0)] {
                for _ in 0..half {
                    let features = [center + rng.standard_normal(), center + rng.standard_normal()];
                    points.push(SvmPoint { node, features, label });
                }
            }
        }
        Ok(SvmDataset { n, points })
    }

    /// Rows `node,feature1,feature2,label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,feature1,feature2,label\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{:.17e},{:.17e},{}", p.node, p.features[0], p.features[1], p.label as i32);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("node,feature1,feature2,label") {
            return Err(Error::parse("bad dataset header"));
        }
        let mut points = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(format!("bad dataset row `{line}`")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(format!("`{line}`: {e}")));
            let node = f[0].trim().parse().map_err(|e| Error::parse(format!("`{line}`: {e}")))?;
            let label = num(f[3])?;
            if label != 1.0 && label != -1.0 {
                return Err(Error::parse(format!("label must be ±1 in `{line}`")));
            }
            points.push(SvmPoint { node, features: [num(f[1])?, num(f[2])?], label });
        }
        let n = points.iter().map(|p| p.node + 1).max().unwrap_or(0);
        if n == 0 {
            return Err(Error::parse("empty dataset"));
        }
        Ok(SvmDataset { n, points })
    }

    /// Order-sensitive hash of every value, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::mix64(self.n as u64);
        for p in &self.points {
            for v in [p.node as u64, p.features[0].to_bits(), p.features[1].to_bits(), p.label.to_bits()] {
                h = crate::rng::derive_key(h, v);
            }
        }
        h
    }
}

/// `f_i(ω, γ) = (‖ω‖² + γ²)/(2n) + C_N Σ_{j∈D_i} h(b_j(A_jᵀω + γ))`, with
/// `C_N = c/N`; variables are packed as `z = (ω₁, ω₂, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmObjective {
    pub n: usize,
    pub c: f64,
    pub c_n: f64,
    blocks: Vec<Vec<SvmPoint>>,
    fingerprint: u64,
}

impl SvmObjective {
    pub fn new(dataset: &SvmDataset, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config("SVM penalty c must be positive"));
        }
        let mut blocks = vec![Vec::new(); dataset.n];
        for p in &dataset.points {
            blocks[p.node].push(*p);
        }
        if blocks.iter().any(Vec::is_empty) {
            return Err(Error::config("every node needs data"));
        }
        let total = dataset.points.len() as f64;
        Ok(SvmObjective { n: dataset.n, c, c_n: c / total, blocks, fingerprint: dataset.fingerprint() })
    }

    pub fn block(&self, node: usize) -> &[SvmPoint] {
        &self.blocks[node]
    }

    fn margin(p: &SvmPoint, z: &[f64]) -> f64 {
        p.label * (p.features[0] * z[0] + p.features[1] * z[1] + z[2])
    }
}

/// The per-node objectives of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSuite {
    Quadratic(QuadraticObjective),
    Svm(SvmObjective),
}

impl ObjectiveSuite {
    pub fn n(&self) -> usize {
        match self {
            ObjectiveSuite::Quadratic(q) => q.mu.len(),
            ObjectiveSuite::Svm(s) => s.n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSuite::Quadratic(q) => q.centers[0].len(),
            ObjectiveSuite::Svm(_) => 3,
        }
    }

    /// Strong-convexity modulus `μ_i`.
    pub fn mu_i(&self, node: usize) -> f64 {
        match self {
            ObjectiveSuite::Quadratic(q) => q.mu[node],
            ObjectiveSuite::Svm(s) => 1.0 / s.n as f64,
        }
    }

    /// `μ = Σ μ_i`.
    pub fn mu(&self) -> f64 {
        (0..self.n()).map(|i| self.mu_i(i)).sum()
    }

    /// Gradient Lipschitz constant `L_i`.
    pub fn lipschitz(&self, node: usize) -> f64 {
        match self {
            ObjectiveSuite::Quadratic(q) => q.mu[node],
            ObjectiveSuite::Svm(s) => {
                let sq: f64 = s.blocks[node].iter().map(|p| p.features[0].powi(2) + p.features[1].powi(2) + 1.0).sum();
                1.0 / s.n as f64 + s.c_n * sq
            }
        }
    }

    pub fn value(&self, node: usize, z: &[f64]) -> f64 {
        match self {
            ObjectiveSuite::Quadratic(q) => {
                0.5 * q.mu[node] * z.iter().zip(&q.centers[node]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            ObjectiveSuite::Svm(s) => {
                let reg = z.iter().map(|v| v * v).sum::<f64>() / (2.0 * s.n as f64);
                reg + s.c_n * s.blocks[node].iter().map(|p| smoothed_hinge(SvmObjective::margin(p, z))).sum::<f64>()
            }
        }
    }

    pub fn gradient_into(&self, node: usize, z: &[f64], out: &mut [f64]) {
        match self {
            ObjectiveSuite::Quadratic(q) => {
                let m = q.mu[node];
                for ((o, a), b) in out.iter_mut().zip(z).zip(&q.centers[node]) {
                    *o = m * (a - b);
                }
            }
            ObjectiveSuite::Svm(s) => {
                let inv_n = 1.0 / s.n as f64;
                let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
                for p in &s.blocks[node] {
                    let dh = smoothed_hinge_derivative(SvmObjective::margin(p, z));
                    if dh != 0.0 {
                        let w = dh * p.label;
                        g0 += w * p.features[0];
                        g1 += w * p.features[1];
                        g2 += w;
                    }
                }
                out[0] = z[0] * inv_n + s.c_n * g0;
                out[1] = z[1] * inv_n + s.c_n * g1;
                out[2] = z[2] * inv_n + s.c_n * g2;
            }
        }
    }

    pub fn gradient(&self, node: usize, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        self.gradient_into(node, z, &mut g);
        g
    }

    /// `∇F(z) = Σ_i ∇f_i(z)`.
    pub fn global_gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; z.len()];
        let mut g = vec![0.0; z.len()];
        for i in 0..self.n() {
            self.gradient_into(i, z, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        total
    }

    pub fn global_value(&self, z: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.value(i, z)).sum()
    }

    /// Gradient plus bounded noise.
    pub fn noisy_gradient_into(&self, node: usize, z: &[f64], noise: &NoiseModel, rng: &mut Stream, out: &mut [f64]) {
        self.gradient_into(node, z, out);
        noise.add_to(rng, out);
    }
}

/// Relative error `‖g_fd − g‖ / max(‖g‖, 1)` of central differences with
/// step `h` against the analytic gradient of `f_node`.
pub fn finite_difference_error(suite: &ObjectiveSuite, node: usize, z: &[f64], h: f64) -> f64 {
    let g = suite.gradient(node, z);
    let mut zp = z.to_vec();
    let mut err = 0.0;
    for c in 0..z.len() {
        zp[c] = z[c] + h;
        let fp = suite.value(node, &zp);
        zp[c] = z[c] - h;
        let fm = suite.value(node, &zp);
        zp[c] = z[c];
        err += ((fp - fm) / (2.0 * h) - g[c]).powi(2);
    }
    err.sqrt() / norm(&g).max(1.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-coordinate uniform noise on `[−b/2, b/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub b: f64,
}

impl NoiseModel {
    pub fn new(b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::config(format!("noise width {b} must be finite and nonnegative")));
        }
        Ok(NoiseModel { b })
    }

    /// Support `[−√n b/2, √n b/2)`: the sum of `n` independent node noises
    /// has the same variance.
    pub fn centralized(&self, n: usize) -> Self {
        NoiseModel { b: self.b * (n as f64).sqrt() }
    }

    /// `b√d/2`, the bound on `‖ε‖₂`.
    pub fn norm_bound(&self, dim: usize) -> f64 {
        self.b * (dim as f64).sqrt() / 2.0
    }

    /// `E‖ε‖² = d b²/12`.
    pub fn variance(&self, dim: usize) -> f64 {
        dim as f64 * self.b * self.b / 12.0
    }

    pub fn add_to(&self, rng: &mut Stream, out: &mut [f64]) {
        if self.b == 0.0 {
            return;
        }
        let h = self.b / 2.0;
        for o in out.iter_mut() {
            *o += rng.uniform(-h, h);
        }
    }
}

/// Centralized noisy gradient descent: at slots `k ≥ 1` divisible by `l_u`,
/// `x ← x − α_c(k)(∇F(x) + ε)`, with `α_c(k) = l_u/(μ(k + k0))`.
/// Returns `x_c(k)` for `k = 0..=horizon`.
pub fn centralized_baseline(
    suite: &ObjectiveSuite,
    noise: &NoiseModel,
    l_u: u32,
    horizon: usize,
    k0: u64,
    x_init: &[f64],
    rng: &mut Stream,
) -> Result<Vec<Vec<f64>>> {
    if l_u == 0 {
        return Err(Error::config("l_u must be at least 1"));
    }
    let mu = suite.mu();
    let mut x = x_init.to_vec();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(x.clone());
    for k in 0..horizon as u64 {
        if k >= 1 && k % u64::from(l_u) == 0 {
            let mut g = suite.global_gradient(&x);
            noise.add_to(rng, &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { node: usize::MAX, slot: k });
            }
            let step = f64::from(l_u) / (mu * (k + k0) as f64);
            x.iter_mut().zip(&g).for_each(|(xv, gv)| *xv -= step * gv);
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Certified minimizer of `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub z: Vec<f64>,
    /// `‖∇F(z)‖₂` recomputed at the returned point.
    pub gradient_norm: f64,
    pub iterations: usize,
}

impl ReferenceOptimum {
    /// First line the comma-separated vector, second `gradient_norm <v>`.
    pub fn to_text(&self) -> String {
        let v: Vec<String> = self.z.iter().map(|x| format!("{x:.17e}")).collect();
        format!("{}\ngradient_norm {:.6e}\n", v.join(","), self.gradient_norm)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let z = lines
            .next()
            .ok_or_else(|| Error::parse("empty optimum file"))?
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(format!("optimum entry `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let cert = lines
            .next()
            .and_then(|l| l.strip_prefix("gradient_norm "))
            .ok_or_else(|| Error::parse("missing gradient_norm line"))?;
        let gradient_norm = cert.trim().parse().map_err(|e| Error::parse(format!("gradient_norm: {e}")))?;
        Ok(ReferenceOptimum { z, gradient_norm, iterations: 0 })
    }
}

fn reference_cache() -> &'static Mutex<HashMap<u64, ReferenceOptimum>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, ReferenceOptimum>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Closed form for quadratics; for the SVM, accelerated full-gradient
/// descent with step `1/L` (`L = Σ L_i`) and gradient-based restarts until
/// `‖∇F‖ ≤ 1e-10`. SVM results are cached per dataset.
pub fn solve_reference_optimum(suite: &ObjectiveSuite) -> Result<ReferenceOptimum> {
    let svm = match suite {
        ObjectiveSuite::Quadratic(q) => {
            let z = q.optimum();
            let gradient_norm = norm(&suite.global_gradient(&z));
            return Ok(ReferenceOptimum { z, gradient_norm, iterations: 0 });
        }
        ObjectiveSuite::Svm(s) => s,
    };
    if let Some(hit) = reference_cache().lock().expect("cache poisoned").get(&svm.fingerprint) {
        return Ok(hit.clone());
    }
    let l: f64 = (0..suite.n()).map(|i| suite.lipschitz(i)).sum();
    let kappa = l / suite.mu();
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let step = 1.0 / l;
    let d = suite.dim();
    let mut x = vec![0.0; d];
    let mut x_prev = x.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for it in 0..REFERENCE_MAX_ITERATIONS {
        let y: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + momentum * (a - b)).collect();
        let g = suite.global_gradient(&y);
        let gx = suite.global_gradient(&x);
        let gn = norm(&gx);
        if best.as_ref().is_none_or(|(b, _)| gn < *b) {
            best = Some((gn, x.clone()));
        }
        if gn <= REFERENCE_GRADIENT_TOLERANCE {
            let opt = ReferenceOptimum { z: x, gradient_norm: gn, iterations: it };
            reference_cache().lock().expect("cache poisoned").insert(svm.fingerprint, opt.clone());
            return Ok(opt);
        }
        let next: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        // Restart momentum when it points uphill.
        let uphill: f64 = g.iter().zip(next.iter().zip(&x)).map(|(gv, (n, o))| gv * (n - o)).sum();
        x_prev = if uphill > 0.0 { next.clone() } else { x };
        x = next;
    }
    let gn = best.map_or(f64::INFINITY, |(b, _)| b);
    Err(Error::ReferenceSolver(format!(
        "gradient norm {gn:e} above {REFERENCE_GRADIENT_TOLERANCE:e} after {REFERENCE_MAX_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_branches() {
        assert_eq!((smoothed_hinge(2.0), smoothed_hinge_derivative(2.0)), (0.0, 0.0));
        assert_eq!((smoothed_hinge(0.5), smoothed_hinge_derivative(0.5)), (0.125, -0.5));
        assert_eq!(smoothed_hinge(0.0), 0.5);
        assert_eq!(smoothed_hinge(1e-300), 0.5);
        assert_eq!(smoothed_hinge_derivative(0.0), -1.0);
        assert!((smoothed_hinge_derivative(1e-12) + 1.0).abs() < 1e-11);
        assert_eq!(smoothed_hinge(-1.0), 1.5);
    }

    #[test]
    fn quadratic_optimum_and_stationarity() {
        let q = QuadraticObjective::new(vec![1.0, 3.0], vec![vec![0.0], vec![4.0]]).unwrap();
        assert_eq!(q.optimum(), vec![3.0]);
        let s = ObjectiveSuite::Quadratic(q);
        assert_eq!(s.gradient(1, &[4.0]), vec![0.0]);
        assert_eq!(solve_reference_optimum(&s).unwrap().z, vec![3.0]);
    }

    #[test]
    fn quadratic_rejects_bad_input() {
        assert!(QuadraticObjective::new(vec![0.0], vec![vec![1.0]]).is_err());
        assert!(QuadraticObjective::new(vec![1.0, 1.0], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn dataset_shape() {
        let d = SvmDataset::generate(1, &mut Stream::new(3)).unwrap();
        assert_eq!(d.points.len(), 50);
        assert_eq!(d.points.iter().filter(|p| p.label > 0.0).count(), 25);
        let big = SvmDataset::generate(50, &mut Stream::new(3)).unwrap();
        let svm = SvmObjective::new(&big, 500.0).unwrap();
        assert_eq!(big.points.len(), 2500);
        assert!((svm.c_n - 0.2).abs() < 1e-15);
        assert_eq!(SvmDataset::generate(50, &mut Stream::new(3)).unwrap(), big);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let d = SvmDataset::generate(2, &mut Stream::new(8)).unwrap();
        assert_eq!(SvmDataset::from_csv(&d.to_csv()).unwrap(), d);
        assert!(SvmDataset::from_csv("node,feature1,feature2,label\n0,1,2,3\n").is_err());
    }

    #[test]
    fn svm_gradient_when_hinge_inactive() {
        let data = SvmDataset {
            n: 2,
            points: vec![
                SvmPoint { node: 0, features: [1.0, 1.0], label: 1.0 },
                SvmPoint { node: 1, features: [1.0, 1.0], label: 1.0 },
            ],
        };
        let s = ObjectiveSuite::Svm(SvmObjective::new(&data, 500.0).unwrap());
        let z = [2.0, 2.0, 1.0];
        assert_eq!(s.gradient(0, &z), vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn noise_width_zero_is_exact() {
        let s = ObjectiveSuite::Quadratic(QuadraticObjective::new(vec![2.0], vec![vec![1.0, 1.0]]).unwrap());
        let mut out = vec![0.0; 2];
        s.noisy_gradient_into(0, &[0.0, 3.0], &NoiseModel::new(0.0).unwrap(), &mut Stream::new(1), &mut out);
        assert_eq!(out, vec![-2.0, 4.0]);
    }

    #[test]
    fn noise_constants() {
        let nm = NoiseModel::new(4.0).unwrap();
        assert!((nm.variance(2) - 8.0 / 3.0).abs() < 1e-15);
        assert!((nm.centralized(10).variance(2) - 10.0 * 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(nm.norm_bound(4), 4.0);
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn baseline_is_plain_descent_without_noise() {
        let q = QuadraticObjective::new(vec![1.0, 1.0], vec![vec![0.0], vec![2.0]]).unwrap();
        let s = ObjectiveSuite::Quadratic(q);
        let traj = centralized_baseline(&s, &NoiseModel::new(0.0).unwrap(), 1, 2000, 0, &[5.0], &mut Stream::new(1)).unwrap();
        // α(1) = 1/2 on μ = 2 lands exactly on the optimum.
        assert_eq!(traj[2], vec![1.0]);
        assert!((traj[2000][0] - 1.0).abs() < 1e-12);
        let slow = centralized_baseline(&s, &NoiseModel::new(0.0).unwrap(), 3, 10, 0, &[5.0], &mut Stream::new(1)).unwrap();
        assert_eq!(slow[1], slow[3]);
        assert_ne!(slow[3], slow[4]);
    }

    #[test]
    fn optimum_text_round_trip() {
        let o = ReferenceOptimum { z: vec![0.1, -2.5, 3.0], gradient_norm: 3e-11, iterations: 7 };
        let back = ReferenceOptimum::from_text(&o.to_text()).unwrap();
        assert_eq!(back.z, o.z);
        assert_eq!(back.gradient_norm, 3e-11);
    }

    #[test]
    fn svm_reference_is_certified() {
        let d = SvmDataset::generate(4, &mut Stream::new(11)).unwrap();
        let s = ObjectiveSuite::Svm(SvmObjective::new(&d, 500.0).unwrap());
        let opt = solve_reference_optimum(&s).unwrap();
        assert!(norm(&s.global_gradient(&opt.z)) <= REFERENCE_GRADIENT_TOLERANCE);
    }
}
