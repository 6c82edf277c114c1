//! Shared fixtures and independent reference implementations for the
//! integration tests. Nothing here calls into the crate's forward pass.

#![allow(dead_code)]

use isf::data::{synth_exponential, Dataset, NormStats, SynthOracle, SynthSpec};
use isf::model::{Activation, Architecture, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HAZARD_CLAMP: f64 = 1e-7;

/// Exponential benchmark: four covariates with log-rate weight 0.6 each,
/// base rate 0.05 and uniform censoring on (0, 80). Oracle CI ≈ 0.75 and
/// roughly 30% of rows are censored.
pub const BENCH_HORIZON: f64 = 80.0;

pub fn bench_spec(n: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n,
        covariate_dim: 4,
        weights: vec![0.6; 4],
        base_rate: 0.05,
        censor_horizon: BENCH_HORIZON,
        seed,
    }
}

pub struct Benchmark {
    pub train: Dataset,
    pub test: Dataset,
    pub test_oracle: SynthOracle,
}

pub fn benchmark() -> Benchmark {
    let (train, _) = synth_exponential(&bench_spec(2000, 1)).unwrap();
    let (test, test_oracle) = synth_exponential(&bench_spec(1000, 2)).unwrap();
    Benchmark { train, test, test_oracle }
}

/// Small model with every weight and bias drawn from `N(0, scale²)`-ish
/// uniform noise, so no coordinate sits at a special value.
pub fn random_params(
    rng: &mut ChaCha8Rng,
    feature_dim: usize,
    arch: Architecture,
    epsilon: f64,
    t_max: f64,
    scale: f64,
) -> ModelParams {
    let norm = NormStats {
        mean: (0..feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        std: (0..feature_dim).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    let mut p = ModelParams::init(feature_dim, arch, epsilon, t_max, norm, rng.random()).unwrap();
    let flat: Vec<f64> = p.flat().iter().map(|_| rng.random_range(-scale..scale)).collect();
    p.set_flat(&flat);
    p
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| bias + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>())
        .collect()
}

/// Sinusoidal time embedding, written out independently of the crate.
pub fn positional(t: f64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let i = (k / 2) as f64;
            let angle = t / 10000f64.powf(2.0 * i / d as f64);
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Clamped hazard for a single `(x, t)`, evaluated layer by layer.
pub fn naive_hazard(p: &ModelParams, x: &[f64], t: f64) -> f64 {
    let a = p.architecture.activation;
    let mut h: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = p.norm.std[i];
            if s < 1e-12 {
                0.0
            } else {
                (v - p.norm.mean[i]) / s
            }
        })
        .collect();
    for (i, l) in p.encoder.iter().enumerate() {
        h = dense(l.weights.data(), l.bias.data(), &h);
        if i + 1 < p.encoder.len() {
            h = h.into_iter().map(|v| act(a, v)).collect();
        }
    }
    let pe = positional(t, h.len());
    let mut u: Vec<f64> = h.iter().zip(&pe).map(|(z, e)| z + e).collect();
    for (i, l) in p.head.iter().enumerate() {
        if i > 0 {
            u = u.into_iter().map(|v| act(a, v)).collect();
        }
        u = dense(l.weights.data(), l.bias.data(), &u);
    }
    let s = 1.0 / (1.0 + (-u[0]).exp());
    s.clamp(HAZARD_CLAMP, 1.0 - HAZARD_CLAMP)
}

/// `∫₀^t ln(1 − ĥ)` at each multiple of `every · h` up to `count` of them,
/// by the trapezoid rule with spacing `h`.
fn trapezoid_log_survival(p: &ModelParams, x: &[f64], h: f64, every: usize, count: usize) -> Vec<f64> {
    let g = |t: f64| (1.0 - naive_hazard(p, x, t)).ln();
    let mut out = vec![0.0];
    let mut acc = 0.0;
    let mut prev = g(0.0);
    for step in 1..=every * count {
        let cur = g(step as f64 * h);
        acc += 0.5 * h * (prev + cur);
        prev = cur;
        if step % every == 0 {
            out.push(acc);
        }
    }
    out
}

/// Survival at `0, ε, 2ε, …, count·ε` from a trapezoid rule at spacing
/// `ε / sub`.
pub fn trapezoid_survival(p: &ModelParams, x: &[f64], epsilon: f64, sub: usize, count: usize) -> Vec<f64> {
    trapezoid_log_survival(p, x, epsilon / sub as f64, sub, count)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// As [`trapezoid_survival`] with one Richardson step between spacings
/// `ε / sub` and `ε / (2 sub)`, which cancels the leading `O(h²)` error.
pub fn extrapolated_survival(p: &ModelParams, x: &[f64], epsilon: f64, sub: usize, count: usize) -> Vec<f64> {
    let coarse = trapezoid_log_survival(p, x, epsilon / sub as f64, sub, count);
    let fine = trapezoid_log_survival(p, x, epsilon / (2 * sub) as f64, 2 * sub, count);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| ((4.0 * f - c) / 3.0).exp())
        .collect()
}

/// Largest per-coordinate relative error between the reverse-mode gradient
/// of the mean batch loss and central finite differences.
///
/// The relative step `1e-5 · (1 + |w|)` balances truncation against rounding
/// for these losses (absolute disagreement ≈ 2e-11). `floor` keeps exactly
/// zero coordinates, such as weights into dead ReLU units, from dividing
/// rounding noise by zero.
pub fn loss_gradient_error(p: &ModelParams, samples: &[isf::Sample], grid: &isf::TimeGrid, floor: f64) -> f64 {
    let refs: Vec<&isf::Sample> = samples.iter().collect();
    let out = p.batch_loss(&refs, grid, true).unwrap();
    let analytic: Vec<f64> = out.grads.unwrap().iter().flat_map(|g| g.data().to_vec()).collect();
    let mut probe = p.clone();
    let numeric = isf::math::finite_diff_grad_scaled(
        |w| {
            probe.set_flat(w);
            probe.batch_loss(&refs, grid, false).unwrap().loss
        },
        &p.flat(),
        1e-5,
    );
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &b)| isf::math::relative_error(a, b, floor))
        .fold(0.0, f64::max)
}

/// Random gradient-check configurations: small widths, both activations,
/// ε ∈ {0.5, 1}, and batches mixing censored and observed rows.
pub fn gradient_cases(count: usize, seed: u64) -> Vec<(ModelParams, Vec<isf::Sample>, isf::TimeGrid)> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|c| {
            let feature_dim = rng.random_range(1..4);
            let enc = vec![rng.random_range(2..5), 2 * rng.random_range(1..3)];
            let head = vec![rng.random_range(2..5)];
            let mut arch = Architecture::new(enc, head);
            if c % 2 == 1 {
                arch.activation = Activation::Sigmoid;
            }
            let epsilon = if c % 3 == 0 { 0.5 } else { 1.0 };
            let t_max = rng.random_range(3.0..6.0);
            let p = random_params(&mut rng, feature_dim, arch, epsilon, t_max, 0.8);
            let samples = (0..3)
                .map(|s| {
                    let x = random_vec(&mut rng, feature_dim, -2.0, 2.0);
                    let t = rng.random_range(0.05..t_max);
                    isf::Sample::new(x, t, s == 1)
                })
                .collect();
            (p, samples, isf::TimeGrid::new(t_max, epsilon).unwrap())
        })
        .collect()
}

fn max_gap(model: &[f64], oracle: &[f64], points: usize) -> f64 {
    (0..points).map(|i| (model[i] - oracle[i]).abs()).fold(0.0, f64::max)
}

/// Worst `|Ŝ_simpson − Ŝ_trapezoid|` over the grid points before the forced
/// terminal zero, for Glorot-initialized ReLU models of the default
/// architecture at ε = 1 against a trapezoid rule at spacing ε/100.
pub fn relu_quadrature_gaps(draws: usize, seed: u64) -> Vec<f64> {
    let t_max = 30.0;
    let grid = isf::TimeGrid::new(t_max, 1.0).unwrap();
    let k = grid.intervals();
    let mut rng = seeded(seed);
    (0..draws)
        .map(|_| {
            let p = ModelParams::init(3, Architecture::default(), 1.0, t_max, NormStats::identity(3), rng.random())
                .unwrap();
            let x = random_vec(&mut rng, 3, -2.0, 2.0);
            let s = p.survival_curve(&x, &grid).unwrap();
            max_gap(s.values(), &trapezoid_survival(&p, &x, 1.0, 100, k), k)
        })
        .collect()
}

pub const SMOOTH_EPSILONS: [f64; 3] = [1.0, 0.5, 0.25];

/// Per-draw gaps at each of [`SMOOTH_EPSILONS`] for sigmoid-activation
/// networks, against an extrapolated trapezoid rule at spacing 1/400.
pub fn smooth_quadrature_gaps(draws: usize, seed: u64) -> Vec<[f64; 3]> {
    let t_max = 4.0;
    let mut rng = seeded(seed);
    (0..draws)
        .map(|_| {
            let mut arch = Architecture::new(vec![16, 16], vec![16]);
            arch.activation = Activation::Sigmoid;
            let p = ModelParams::init(3, arch, 1.0, t_max, NormStats::identity(3), rng.random()).unwrap();
            let x = random_vec(&mut rng, 3, -2.0, 2.0);
            SMOOTH_EPSILONS.map(|eps| {
                let grid = isf::TimeGrid::new(t_max, eps).unwrap();
                let k = grid.intervals();
                let s = p.survival_curve(&x, &grid).unwrap();
                let oracle = extrapolated_survival(&p, &x, eps, (400.0 * eps).round() as usize, k);
                max_gap(s.values(), &oracle, k)
            })
        })
        .collect()
}

pub fn random_arch(rng: &mut impl Rng) -> Architecture {
    let mut arch = Architecture::new(
        vec![rng.random_range(2..6), 2 * rng.random_range(1..4)],
        vec![rng.random_range(2..6)],
    );
    if rng.random_bool(0.5) {
        arch.activation = Activation::Sigmoid;
    }
    arch
}

/// Draws random models, grids and covariates and checks that every predicted
/// curve is a proper distribution. Returns the worst `|Σ p̂ − 1|`, or the
/// first violation found.
pub fn distribution_check(draws: usize, seed: u64) -> Result<f64, String> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for draw in 0..draws {
        let feature_dim = rng.random_range(1..5);
        let t_max = rng.random_range(2.0..30.0);
        let epsilon = [0.25, 0.5, 1.0, 2.0][draw % 4];
        let scale = rng.random_range(0.1..3.0);
        let arch = random_arch(&mut rng);
        let p = random_params(&mut rng, feature_dim, arch, epsilon, t_max, scale);
        let grid = isf::TimeGrid::new(t_max, epsilon).unwrap();
        let x = random_vec(&mut rng, feature_dim, -3.0, 3.0);
        let pred = p.predict(&x, &grid).unwrap();
        let s = pred.curve.values();
        let k = grid.intervals();
        if s[0] != 1.0 || s[k] != 0.0 {
            return Err(format!("draw {draw}: endpoints {} and {}", s[0], s[k]));
        }
        if let Some(i) = s.windows(2).position(|w| w[1] > w[0]) {
            return Err(format!("draw {draw}: survival rises after point {i}"));
        }
        if let Some(m) = pred.masses.values().iter().find(|&&m| m < 0.0) {
            return Err(format!("draw {draw}: negative mass {m}"));
        }
        worst = worst.max((pred.masses.total() - 1.0).abs());
    }
    Ok(worst)
}
