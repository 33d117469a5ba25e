//! Single-machine reference solvers.
//!
//! - [`solve_normal_equations`]: exact least-squares solution via
//!   fraction-free (Bareiss) elimination over the integers.
//! - [`gd_real`]: textbook gradient descent in `f64`.
//! - [`gd_fixedpoint`]: gradient descent with exactly the integer and
//!   rational arithmetic of the two-party protocol. The protocol's revealed θ
//!   must equal its output bit for bit.

use std::io::{self, Write};
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::enclinalg::{gram, PlainMatrix, PlainVector};
use crate::error::{Error, Result};
use crate::fixedpoint::{parse_decimal, rational_from_f64, ScaledInt};
use crate::protocol::{Bounds, SessionParams};

/// Relative pivot tolerance for the floating-point solver.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Norm growth factor that counts as divergence in [`gd_real`].
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Feature matrix and labels, stored as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<BigRational>>,
    y: Vec<BigRational>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<BigRational>>, y: Vec<BigRational>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("{} rows but {} labels", x.len(), y.len())));
        }
        let n = x[0].len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no feature columns".into()));
        }
        if let Some(i) = x.iter().position(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("row {i} has {} features, expected {n}", x[i].len())));
        }
        Ok(Self { x, y })
    }

    pub fn from_f64(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let x = x
            .iter()
            .map(|row| row.iter().map(|&v| rational_from_f64(v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let y = y.iter().map(|&v| rational_from_f64(v)).collect::<Result<Vec<_>>>()?;
        Self::new(x, y)
    }

    /// Parses headerless CSV: one row per instance, label in the last column.
    /// Numbers are read as exact decimals.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut width = None;
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() < 2 {
                return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
            }
            match width {
                None => width = Some(record.len()),
                Some(w) if w != record.len() => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {w} columns, found {}", record.len()),
                    })
                }
                _ => {}
            }
            let mut values = record
                .iter()
                .map(|field| parse_decimal(field).map_err(|e| Error::Parse { line, message: e.to_string() }))
                .collect::<Result<Vec<_>>>()?;
            y.push(values.pop().expect("at least two columns"));
            x.push(values);
        }
        if x.is_empty() {
            return Err(Error::Parse { line: 0, message: "no data rows".into() });
        }
        Self::new(x, y)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_csv_str(&text)
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<BigRational>] {
        &self.x
    }

    pub fn y(&self) -> &[BigRational] {
        &self.y
    }

    /// First `m1` rows and the rest.
    pub fn split_at(&self, m1: usize) -> Result<(Dataset, Dataset)> {
        if m1 == 0 || m1 >= self.m() {
            return Err(Error::InvalidParameter(format!("split {m1} must lie strictly inside 1..{}", self.m())));
        }
        Ok((
            Dataset::new(self.x[..m1].to_vec(), self.y[..m1].to_vec())?,
            Dataset::new(self.x[m1..].to_vec(), self.y[m1..].to_vec())?,
        ))
    }

    /// Fails with a capacity overflow if any entry exceeds the declared bounds.
    pub fn check_bounds(&self, bounds: &Bounds) -> Result<()> {
        let bx = bounds.x.as_ratio();
        let by = bounds.y.as_ratio();
        for (i, (row, y)) in self.x.iter().zip(&self.y).enumerate() {
            if let Some(j) = row.iter().position(|v| &v.abs() > bx) {
                return Err(Error::CapacityOverflow(format!(
                    "row {i} feature {j} exceeds the declared bound on x"
                )));
            }
            if &y.abs() > by {
                return Err(Error::CapacityOverflow(format!("row {i} label exceeds the declared bound on y")));
            }
        }
        Ok(())
    }

    pub fn encode_x(&self, s1: u32) -> PlainMatrix {
        let entries = self
            .x
            .iter()
            .flat_map(|row| row.iter().map(|v| ScaledInt::encode_rational(v, s1).into_mantissa()))
            .collect();
        PlainMatrix::new(self.m(), self.n(), s1, entries).expect("dataset is non-empty")
    }

    pub fn encode_y(&self, s: u32) -> PlainVector {
        let entries = self.y.iter().map(|v| ScaledInt::encode_rational(v, s).into_mantissa()).collect();
        PlainVector::new(s, entries).expect("dataset is non-empty")
    }

    fn x_f64(&self) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
            .collect()
    }

    fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Exact `XᵀX` and `XᵀY`.
    #[allow(clippy::needless_range_loop)]
    pub fn normal_system(&self) -> (Vec<Vec<BigRational>>, Vec<BigRational>) {
        let n = self.n();
        let mut a = vec![vec![BigRational::zero(); n]; n];
        let mut b = vec![BigRational::zero(); n];
        for (row, y) in self.x.iter().zip(&self.y) {
            for i in 0..n {
                for j in i..n {
                    a[i][j] += &row[i] * &row[j];
                }
                b[i] += &row[i] * y;
            }
        }
        for i in 0..n {
            for j in 0..i {
                a[i][j] = a[j][i].clone();
            }
        }
        (a, b)
    }
}

/// Exact solution of `XᵀX θ = XᵀY`.
pub fn solve_normal_equations(data: &Dataset) -> Result<Vec<BigRational>> {
    let (a, b) = data.normal_system();
    solve_exact(&a, &b)
}

/// Solves a square rational system with Bareiss fraction-free elimination.
pub fn solve_exact(a: &[Vec<BigRational>], b: &[BigRational]) -> Result<Vec<BigRational>> {
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("system is not square".into()));
    }
    // Clear denominators so elimination runs over the integers.
    let lcm = a
        .iter()
        .flatten()
        .chain(b)
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let mut m: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            a[i].iter()
                .chain(std::iter::once(&b[i]))
                .map(|v| (v * BigRational::from_integer(lcm.clone())).to_integer())
                .collect()
        })
        .collect();

    let mut prev = BigInt::one();
    for k in 0..n {
        let pivot_row = (k..n)
            .find(|&r| !m[r][k].is_zero())
            .ok_or_else(|| Error::SingularSystem(format!("zero pivot in column {k}")))?;
        m.swap(k, pivot_row);
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }

    let mut theta = vec![BigRational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = BigRational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            acc -= BigRational::from_integer(m[i][j].clone()) * &theta[j];
        }
        theta[i] = acc / BigRational::from_integer(m[i][i].clone());
    }
    Ok(theta)
}

/// Floating-point solve of the normal equations with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn solve_normal_equations_f64(data: &Dataset) -> Result<Vec<f64>> {
    let (a, b) = normal_system_f64(data);
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.into_iter().zip(b).map(|(mut r, bi)| {
        r.push(bi);
        r
    }).collect();
    let scale = m.iter().flat_map(|r| r[..n].iter()).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("non-empty range");
        if m[p][k].abs() < tol {
            return Err(Error::SingularSystem(format!("pivot {:e} below tolerance in column {k}", m[p][k])));
        }
        m.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut theta = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * theta[j]).sum();
        theta[i] = (m[i][n] - s) / m[i][i];
    }
    Ok(theta)
}

fn normal_system_f64(data: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = data.x_f64();
    let y = data.y_f64();
    let n = data.n();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (row, yi) in x.iter().zip(&y) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * yi;
        }
    }
    (a, b)
}

/// Real-valued gradient descent `θ ← θ - (α/m)(XᵀXθ - XᵀY)`.
pub fn gd_real(data: &Dataset, alpha: f64, iterations: u64, theta0: &[f64]) -> Result<Vec<f64>> {
    gd_real_with(data, alpha, iterations, theta0, |_, _| {})
}

/// [`gd_real`] with a callback after every iteration.
pub fn gd_real_with(
    data: &Dataset,
    alpha: f64,
    iterations: u64,
    theta0: &[f64],
    mut observe: impl FnMut(u64, &[f64]),
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = data.n();
    if theta0.len() != n {
        return Err(Error::DimensionMismatch(format!("theta0 has {} entries, expected {n}", theta0.len())));
    }
    let (a, b) = normal_system_f64(data);
    let step = alpha / data.m() as f64;
    let mut theta = theta0.to_vec();
    let mut reference = norm(&theta).max(1.0);
    for it in 1..=iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| a[i].iter().zip(&theta).map(|(aij, tj)| aij * tj).sum::<f64>() - b[i])
            .collect();
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
        let size = norm(&theta);
        if it == 1 {
            reference = reference.max(size);
        }
        if !size.is_finite() || size > DIVERGENCE_FACTOR * reference {
            return Err(Error::Diverged(it));
        }
        observe(it, &theta);
    }
    Ok(theta)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a - b‖ / ‖b‖`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b)
}

pub fn rationals_to_f64(v: &[BigRational]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

/// Fixed-point gradient descent with the protocol's exact arithmetic.
///
/// X is encoded at `s1`, Y at `s1+s2`, θ at `s2`. Each iteration computes the
/// integer gradient `g = XᵀX t - XᵀY` at scale `2s1+s2`, takes the exact step
/// `t - α g / (m 10^(2 s1))`, and rounds it to an integer (ties up).
pub fn gd_fixedpoint(data: &Dataset, params: &SessionParams) -> Result<Vec<ScaledInt>> {
    gd_fixedpoint_with(data, params, |_, _| {})
}

/// [`gd_fixedpoint`] with a callback receiving every θ mantissa vector,
/// starting at iteration 0.
pub fn gd_fixedpoint_with(
    data: &Dataset,
    params: &SessionParams,
    mut observe: impl FnMut(u64, &[BigInt]),
) -> Result<Vec<ScaledInt>> {
    let plan = params.scale_plan;
    if data.m() as u64 != params.m() || data.n() != params.n as usize {
        return Err(Error::DimensionMismatch(format!(
            "dataset is {}x{}, parameters expect {}x{}",
            data.m(),
            data.n(),
            params.m(),
            params.n
        )));
    }
    let capacity = params.capacity();
    let x = data.encode_x(plan.s1());
    let y = data.encode_y(plan.s_y());
    let (xtx, xty) = gram(&x, &y)?;

    // t' = round((t D - a g) / D) with D = den(α) m 10^(2 s1), a = num(α).
    let denom = params.common_denominator();
    let numer_alpha = params.alpha.numer().clone();
    let two_denom = &denom * 2u32;

    let mut theta: Vec<BigInt> = params.theta0.entries().to_vec();
    observe(0, &theta);
    for it in 1..=u64::from(params.iterations) {
        let theta_vec = PlainVector::new(plan.s2(), theta.clone())?;
        let grad = xtx.matvec(&theta_vec)?.checked_sub(&xty)?;
        for (t, g) in theta.iter_mut().zip(grad.entries()) {
            let numer = &*t * &denom - &numer_alpha * g;
            *t = (numer * 2u32 + &denom).div_floor(&two_denom);
            capacity.check_theta(t)?;
        }
        observe(it, &theta);
    }
    Ok(theta.into_iter().map(|t| ScaledInt::new(t, plan.s2())).collect())
}

/// Writes `iteration,theta_0..theta_{n-1},rel_error` rows.
pub fn write_trajectory_header<W: Write>(out: &mut W, n: usize) -> io::Result<()> {
    write!(out, "iteration")?;
    for j in 0..n {
        write!(out, ",theta_{j}")?;
    }
    writeln!(out, ",rel_error")
}

pub fn write_trajectory_row<W: Write>(out: &mut W, iteration: u64, theta: &[f64], exact: &[f64]) -> io::Result<()> {
    write!(out, "{iteration}")?;
    for t in theta {
        write!(out, ",{t:e}")?;
    }
    writeln!(out, ",{:e}", relative_error(theta, exact))
}
