//! Zero-order-hold discretization and stepping of linear models.
//!
//! ```text
//! A_d = e^{A T_s},  B_d = A⁻¹ (A_d − I) B,  x[k+1] = A_d x[k] + B_d u[k]
//! ```
//!
//! When `A` is singular or badly conditioned the pair is read off the
//! exponential of the augmented matrix `[[A, B], [0, 0]] T_s` instead.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::case::BusId;
use crate::error::{Error, Result};
use crate::life::LifeSystem;
use crate::live::LiveSystem;
use crate::math;
use crate::{Matrix, Vector};

/// Condition estimate above which [`discretize`] takes the augmented path.
pub const COND_LIMIT: f64 = 1e12;

/// Discrete-time pair produced by [`discretize`].
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub a_d: Matrix,
    pub b_d: Matrix,
    /// Sampling period, seconds.
    pub t_s: f64,
}

impl DiscreteSystem {
    pub fn n_states(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_d.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Samples in Hz.
    Frequency,
    /// Samples in pu.
    Voltage,
}

/// Uniformly sampled per-bus series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub series: BTreeMap<BusId, Vec<f64>>,
    pub kind: TrajectoryKind,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sampling period, or 0 for single-sample trajectories.
    pub fn step(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    /// Builds a single-bus trajectory from a closure sampled at `k · t_s`.
    pub fn from_fn(bus: BusId, kind: TrajectoryKind, t_s: f64, samples: usize, f: impl Fn(f64) -> f64) -> Self {
        let t: Vec<f64> = (0..samples).map(|k| k as f64 * t_s).collect();
        let values = t.iter().map(|&tk| f(tk)).collect();
        let mut series = BTreeMap::new();
        series.insert(bus, values);
        Trajectory { t, series, kind }
    }
}

// Padé coefficients and the backward-error bounds θ_m for degrees 3..13.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| math::abs(*x)).sum::<f64>()).fold(0.0, f64::max)
}

fn is_diagonal(m: &Matrix) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// `e^m` by scaling and squaring with a Padé approximant of degree 3 to 13.
pub fn matrix_exponential(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: m.ncols() });
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if is_diagonal(m) {
        return Ok(Matrix::from_diagonal(&m.diagonal().map(math::exp)));
    }

    let norm = norm1(m);
    let ident = Matrix::identity(n, n);
    let a2 = m * m;
    for (theta, coeffs) in [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ] {
        if norm <= theta {
            return pade_low(m, &a2, &ident, coeffs);
        }
    }

    let s = if norm > THETA_13 { math::ceil(math::log2(norm / THETA_13)).max(0.0) as i32 } else { 0 };
    let scale = math::pow(2.0, -s as f64);
    let a = m * scale;
    let a2 = a2 * (scale * scale);
    let mut r = pade_13(&a, &a2, &ident)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &Matrix, a2: &Matrix, ident: &Matrix, b: &[f64]) -> Result<Matrix> {
    // U = A Σ b_{2k+1} A^{2k},  V = Σ b_{2k} A^{2k}
    let mut pow = ident.clone();
    let mut u = ident * b[1];
    let mut v = ident * b[0];
    let mut k = 2;
    while k < b.len() {
        pow = &pow * a2;
        v += &pow * b[k];
        u += &pow * b[k + 1];
        k += 2;
    }
    let u = a * u;
    solve_pade(&u, &v)
}

fn pade_13(a: &Matrix, a2: &Matrix, ident: &Matrix) -> Result<Matrix> {
    let b = &PADE_13;
    let a4 = a2 * a2;
    let a6 = &a4 * a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + a2 * b[3] + ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + a2 * b[2] + ident * b[0];
    solve_pade(&u, &v)
}

fn solve_pade(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::Singular)
}

/// Hager's estimate of the 1-norm condition number. Infinite when `a` is
/// exactly singular.
pub fn condition_estimate(a: &Matrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let lu = a.clone().lu();
    if !lu.is_invertible() {
        return f64::INFINITY;
    }
    let (p, l, u) = lu.unpack();
    let solve = |x: &Vector| -> Option<Vector> {
        let mut y = x.clone();
        p.permute_rows(&mut y);
        let y = l.solve_lower_triangular(&y)?;
        u.solve_upper_triangular(&y)
    };
    let solve_t = |x: &Vector| -> Option<Vector> {
        let w = u.tr_solve_upper_triangular(x)?;
        let mut v = l.tr_solve_lower_triangular(&w)?;
        p.inv_permute_rows(&mut v);
        Some(v)
    };

    let mut x = Vector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = solve(&x) else { return f64::INFINITY };
        est = y.iter().map(|v| math::abs(*v)).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_t(&xi) else { return f64::INFINITY };
        let (j, zmax) = z.iter().enumerate().fold((0, 0.0), |(bj, bm), (j, v)| {
            if math::abs(*v) > bm {
                (j, math::abs(*v))
            } else {
                (bj, bm)
            }
        });
        if zmax <= z.dot(&x) {
            break;
        }
        x = Vector::zeros(n);
        x[j] = 1.0;
    }
    if !est.is_finite() {
        return f64::INFINITY;
    }
    norm1(a) * est
}

fn check_shapes(a: &Matrix, b: &Matrix, t_s: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    if !(t_s > 0.0 && t_s.is_finite()) {
        return Err(Error::InvalidParameter { what: "t_s", value: t_s });
    }
    Ok(())
}

/// Discretizes `ẋ = a x + b u` under a zero-order hold with period `t_s`.
pub fn discretize(a: &Matrix, b: &Matrix, t_s: f64) -> Result<DiscreteSystem> {
    check_shapes(a, b, t_s)?;
    if condition_estimate(a) > COND_LIMIT {
        return discretize_augmented(a, b, t_s);
    }
    discretize_direct(a, b, t_s)
}

/// `A_d = e^{a t_s}`, `B_d = (A_d − I) a⁻¹ b`. Fails on singular `a`.
pub fn discretize_direct(a: &Matrix, b: &Matrix, t_s: f64) -> Result<DiscreteSystem> {
    check_shapes(a, b, t_s)?;
    let n = a.nrows();
    let a_d = matrix_exponential(&(a * t_s))?;
    let a_inv_b = a.clone().lu().solve(b).ok_or(Error::Singular)?;
    let b_d = (&a_d - Matrix::identity(n, n)) * a_inv_b;
    Ok(DiscreteSystem { a_d, b_d, t_s })
}

/// Reads `(A_d, B_d)` off `exp([[a, b], [0, 0]] t_s)`. Valid for any `a`.
pub fn discretize_augmented(a: &Matrix, b: &Matrix, t_s: f64) -> Result<DiscreteSystem> {
    check_shapes(a, b, t_s)?;
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t_s));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * t_s));
    let e = matrix_exponential(&aug)?;
    Ok(DiscreteSystem {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, m)).into_owned(),
        t_s,
    })
}

/// Number of samples (initial state included) covering `horizon`.
pub fn sample_count(horizon: f64, t_s: f64) -> usize {
    math::ceil(horizon / t_s - 1e-9) as usize + 1
}

/// Steps the recurrence with `u` held constant. Column `k` of the result is
/// the state at `k · t_s`.
pub fn simulate(sys: &DiscreteSystem, u: &Vector, horizon: f64, x0: &Vector) -> Result<Matrix> {
    let n = sys.n_states();
    if u.len() != sys.n_inputs() {
        return Err(Error::DimensionMismatch { expected: sys.n_inputs(), found: u.len() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
    }
    if !(horizon >= sys.t_s) {
        return Err(Error::InvalidParameter { what: "horizon", value: horizon });
    }
    let samples = sample_count(horizon, sys.t_s);
    let bu = &sys.b_d * u;
    let mut out = Matrix::zeros(n, samples);
    out.set_column(0, x0);
    let mut x = x0.clone();
    let mut next = Vector::zeros(n);
    for k in 1..samples {
        next.copy_from(&bu);
        next.gemv(1.0, &sys.a_d, &x, 1.0);
        core::mem::swap(&mut x, &mut next);
        out.set_column(k, &x);
    }
    Ok(out)
}

/// Classical fixed-step RK4 on `ẋ = a x + b u`, recorded every `t_s`.
///
/// Independent of the exponential; it exists to check [`simulate`].
pub fn integrate_reference(
    a: &Matrix,
    b: &Matrix,
    u: &Vector,
    x0: &Vector,
    horizon: f64,
    dt: f64,
    t_s: f64,
) -> Result<Matrix> {
    check_shapes(a, b, t_s)?;
    if !(dt > 0.0 && dt < t_s) {
        return Err(Error::InvalidParameter { what: "dt", value: dt });
    }
    let ratio = t_s / dt;
    let substeps = math::round(ratio) as usize;
    if math::abs(ratio - substeps as f64) > 1e-6 {
        return Err(Error::InvalidParameter { what: "dt", value: dt });
    }
    let n = a.nrows();
    let bu = b * u;
    let f = |x: &Vector| a * x + &bu;
    let samples = sample_count(horizon, t_s);
    let mut out = Matrix::zeros(n, samples);
    out.set_column(0, x0);
    let mut x = x0.clone();
    for k in 1..samples {
        for _ in 0..substeps {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (dt / 2.0)));
            let k3 = f(&(&x + &k2 * (dt / 2.0)));
            let k4 = f(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        out.set_column(k, &x);
    }
    Ok(out)
}

fn time_grid(samples: usize, t_s: f64) -> Vec<f64> {
    (0..samples).map(|k| k as f64 * t_s).collect()
}

/// Frequency in Hz at every GFM from LIFE state samples.
pub fn states_to_frequency(samples: &Matrix, life: &LifeSystem, t_s: f64) -> Trajectory {
    let f0 = life.f0();
    let omega0 = life.omega0();
    let mut series = BTreeMap::new();
    for (i, &bus) in life.gen_ids().iter().enumerate() {
        let row = samples.row(life.freq_state(i));
        series.insert(bus, row.iter().map(|&dw| f0 * (1.0 + dw / omega0)).collect());
    }
    Trajectory { t: time_grid(samples.ncols(), t_s), series, kind: TrajectoryKind::Frequency }
}

/// Terminal voltage magnitude in pu at every GFM from LIVE state samples.
pub fn states_to_voltage(samples: &Matrix, live: &LiveSystem, t_s: f64) -> Trajectory {
    let mut series = BTreeMap::new();
    for (i, &bus) in live.gen_ids().iter().enumerate() {
        let v0 = live.v0[i];
        series.insert(bus, samples.row(i).iter().map(|&dv| v0 + dv).collect());
    }
    Trajectory { t: time_grid(samples.ncols(), t_s), series, kind: TrajectoryKind::Voltage }
}
