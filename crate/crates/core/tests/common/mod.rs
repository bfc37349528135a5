#![allow(dead_code)]

use cbf_lab::linalg::{matrix_power, null_space};
use cbf_lab::riccati::lqr_gain;
use cbf_lab::{
    build_filter_data, build_hocbf_chain, compute_relative_degree, Constraint, FilterConfig,
    FilterData, HocbfChain, Plant, Tolerances,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub plant: Plant,
    pub constraint: Constraint,
    pub config: FilterConfig,
    pub fd: FilterData,
    pub chain: HocbfChain,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.plant.n()
    }
}

pub fn random_matrix(rng: &mut TestRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut TestRng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_spd(rng: &mut TestRng, m: usize) -> DMatrix<f64> {
    let l = random_matrix(rng, m, m);
    &l * l.transpose() + DMatrix::identity(m, m) * 0.2
}

/// `r` distinct slopes in `[0.5, 5]`, at least 0.2 apart.
pub fn random_alphas(rng: &mut TestRng, r: usize) -> Vec<f64> {
    loop {
        let a: Vec<f64> = (0..r).map(|_| rng.random_range(0.5..5.0)).collect();
        let separated = a
            .iter()
            .enumerate()
            .all(|(i, x)| a[..i].iter().all(|y| (x - y).abs() >= 0.2));
        if separated {
            return a;
        }
    }
}

/// LQR gain with random diagonal weights, so `A − BK` is Hurwitz.
pub fn random_stabilizing_gain(
    rng: &mut TestRng,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let (n, m) = (a.nrows(), b.ncols());
    let q = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..10.0)));
    let r = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.1..10.0)));
    lqr_gain(a, b, &q, &r).ok()
}

/// Normal `c` with relative degree exactly `r`: orthogonal to
/// `B, AB, …, A^{r−2}B` and not to `A^{r−1}B`.
pub fn constraint_normal(
    rng: &mut TestRng,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: usize,
) -> Option<DVector<f64>> {
    let (n, m) = (a.nrows(), b.ncols());
    let c = if r == 1 {
        random_vector(rng, n, 1.0)
    } else {
        let mut krylov = DMatrix::zeros(n, m * (r - 1));
        for i in 0..r - 1 {
            krylov
                .view_mut((0, i * m), (n, m))
                .copy_from(&(matrix_power(a, i) * b));
        }
        let basis = null_space(&krylov.transpose(), 1e-10).ok()?;
        if basis.ncols() == 0 {
            return None;
        }
        &basis * random_vector(rng, basis.ncols(), 1.0)
    };
    let c = &c / c.norm();
    let plant = Plant::new_unchecked(a.clone(), b.clone()).ok()?;
    (compute_relative_degree(&plant, &c, 1e-9).ok()? == r).then_some(c)
}

pub struct Shape {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

/// Largest relative degree a generic `(A, B)` with `m` inputs admits.
pub fn max_relative_degree(n: usize, m: usize) -> usize {
    1 + (n - 1) / m
}

pub fn random_shape(rng: &mut TestRng, ns: std::ops::RangeInclusive<usize>, ms: &[usize]) -> Shape {
    let n = rng.random_range(ns);
    let m = ms[rng.random_range(0..ms.len())].min(n);
    let r = rng.random_range(1..=max_relative_degree(n, m));
    Shape { n, m, r }
}

/// Random valid instance of the given shape; `None` on an unlucky draw.
pub fn try_instance(rng: &mut TestRng, shape: &Shape) -> Option<Instance> {
    let tol = Tolerances::default();
    let a = random_matrix(rng, shape.n, shape.n) * (2.0 / (shape.n as f64).sqrt());
    let b = random_matrix(rng, shape.n, shape.m);
    let plant = Plant::new(a, b, &tol).ok()?;
    let c = constraint_normal(rng, plant.a(), plant.b(), shape.r)?;
    let d = rng.random_range(0.1..2.0);
    let constraint = Constraint::new(&plant, c, d, &tol).ok()?;
    let k = random_stabilizing_gain(rng, plant.a(), plant.b())?;
    let g = random_spd(rng, shape.m);
    let alphas = random_alphas(rng, shape.r);
    let config = FilterConfig::new(&plant, &constraint, k, g, alphas, &tol).ok()?;
    let fd = build_filter_data(&plant, &constraint, &config).ok()?;
    let chain = build_hocbf_chain(&plant, &constraint, config.alphas()).ok()?;
    Some(Instance {
        plant,
        constraint,
        config,
        fd,
        chain,
    })
}

pub fn instance(rng: &mut TestRng, shape: &Shape) -> Instance {
    for _ in 0..1000 {
        if let Some(inst) = try_instance(rng, shape) {
            return inst;
        }
    }
    panic!(
        "could not draw a valid instance with n = {}, m = {}, r = {}",
        shape.n, shape.m, shape.r
    );
}

/// Same plant and constraint with a new gain and weight.
pub fn with_gain(inst: &Instance, k: DMatrix<f64>, g: DMatrix<f64>) -> Option<Instance> {
    let tol = Tolerances::default();
    let config = FilterConfig::new(
        &inst.plant,
        &inst.constraint,
        k,
        g,
        inst.config.alphas().to_vec(),
        &tol,
    )
    .ok()?;
    let fd = build_filter_data(&inst.plant, &inst.constraint, &config).ok()?;
    Some(Instance {
        plant: inst.plant.clone(),
        constraint: inst.constraint.clone(),
        chain: inst.chain.clone(),
        config,
        fd,
    })
}

/// Greedy multiset match; returns the largest pair distance, or `None` when
/// the sizes differ or some element has no partner within `radius`.
pub fn multiset_distance(
    a: &[cbf_lab::linalg::Complex64],
    b: &[cbf_lab::linalg::Complex64],
    radius: f64,
) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut pool: Vec<_> = b.to_vec();
    let mut worst = 0.0_f64;
    for z in a {
        let (idx, dist) = pool
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        if dist > radius {
            return None;
        }
        worst = worst.max(dist);
        pool.swap_remove(idx);
    }
    Some(worst)
}
