use nalgebra::{DMatrix, DVector};

use super::{ConstraintSet, LinearSsm};
use crate::error::{PsmError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OInfConfig {
    pub horizon: usize,
    /// Steady-state tightening (scaled units).
    pub epsilon: f64,
    /// Append rows keeping every scaled input in [0, 1].
    pub input_box: bool,
}

impl Default for OInfConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            epsilon: 0.01,
            input_box: true,
        }
    }
}

/// Finite-horizon inner description `Hx dx + Hv dv <= h` of the maximal
/// output admissible set, with `dx = x - x00` and `dv = v - v00`.
#[derive(Clone, Debug, PartialEq)]
pub struct OInfApprox {
    pub hx: DMatrix<f64>,
    pub hv: DMatrix<f64>,
    pub h: DVector<f64>,
    pub horizon: usize,
    pub epsilon: f64,
    /// Rows coming from output constraints; any input-box rows follow them.
    pub n_output_rows: usize,
    pub x00: DVector<f64>,
    pub v00: DVector<f64>,
}

impl OInfApprox {
    pub fn n_rows(&self) -> usize {
        self.h.len()
    }

    /// Largest row violation at absolute scaled `(x, v)`.
    pub fn max_violation(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let lhs = &self.hx * (x - &self.x00) + &self.hv * (v - &self.v00);
        (lhs - &self.h).max()
    }

    /// Copy without the rows that constrain only the current state.
    pub fn input_dependent(&self) -> OInfApprox {
        let keep: Vec<usize> = (0..self.n_rows()).filter(|&i| self.hv.row(i).amax() > 0.0).collect();
        let n_output_rows = keep.iter().filter(|&&i| i < self.n_output_rows).count();
        OInfApprox {
            hx: self.hx.select_rows(&keep),
            hv: self.hv.select_rows(&keep),
            h: self.h.select_rows(&keep),
            n_output_rows,
            ..self.clone()
        }
    }

    pub fn contains(&self, x: &DVector<f64>, v: &DVector<f64>) -> bool {
        self.max_violation(x, v) <= 1e-12
    }

    /// Rows `M v <= g` restricting the input at fixed state `x`.
    fn input_rows(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let g = &self.h - &self.hx * (x - &self.x00) + &self.hv * &self.v00;
        (self.hv.clone(), g)
    }
}

/// Rows for k = 0..=T plus one tightened steady-state row per constraint.
pub fn build_oinf(ssm: &LinearSsm, constraints: &ConstraintSet, config: &OInfConfig) -> Result<OInfApprox> {
    if constraints.is_empty() {
        return Err(PsmError::Config("admissible set needs at least one constraint".into()));
    }
    if config.horizon == 0 || !(config.epsilon >= 0.0) {
        return Err(PsmError::Config("horizon must be >= 1 and epsilon >= 0".into()));
    }
    let q = ssm.state_dim();
    let p = ssm.input_dim();
    if constraints.rows.iter().any(|(c, _)| c.len() != q) {
        return Err(PsmError::Dimension {
            expected: q,
            actual: constraints.rows[0].0.len(),
            context: "constraint row",
        });
    }
    let rho = ssm.spectral_radius();
    if rho >= 1.0 {
        return Err(PsmError::NotSchur(rho));
    }
    let eye = DMatrix::<f64>::identity(q, q);
    let steady = (&eye - &ssm.a).try_inverse().ok_or(PsmError::SingularSteadyState)?;
    let offset = &ssm.f00 - &ssm.x00;

    let n_c = constraints.len();
    let n_out = (config.horizon + 2) * n_c;
    let n_rows = n_out + if config.input_box { 2 * p } else { 0 };
    let mut hx = DMatrix::zeros(n_rows, q);
    let mut hv = DMatrix::zeros(n_rows, p);
    let mut h = DVector::zeros(n_rows);

    let mut ak = eye.clone();
    let mut sk = DMatrix::<f64>::zeros(q, q);
    let mut r = 0;
    for _ in 0..=config.horizon {
        let skb = &sk * &ssm.b;
        let skc = &sk * &offset;
        for (c, d) in &constraints.rows {
            hx.row_mut(r).copy_from(&(c.transpose() * &ak));
            hv.row_mut(r).copy_from(&(c.transpose() * &skb));
            h[r] = d - c.dot(&ssm.x00) - c.dot(&skc);
            r += 1;
        }
        sk += &ak;
        ak = &ssm.a * ak;
    }
    let mb = &steady * &ssm.b;
    let mc = &steady * &offset;
    for (c, d) in &constraints.rows {
        hv.row_mut(r).copy_from(&(c.transpose() * &mb));
        h[r] = d - c.dot(&ssm.x00) - c.dot(&mc) - config.epsilon * c.norm();
        r += 1;
    }
    if config.input_box {
        for j in 0..p {
            hv[(r, j)] = 1.0;
            h[r] = 1.0 - ssm.v00[j];
            hv[(r + 1, j)] = -1.0;
            h[r + 1] = ssm.v00[j];
            r += 2;
        }
    }
    Ok(OInfApprox {
        hx,
        hv,
        h,
        horizon: config.horizon,
        epsilon: config.epsilon,
        n_output_rows: n_out,
        x00: ssm.x00.clone(),
        v00: ssm.v00.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrgOutcome {
    pub kappa: f64,
    /// False when the held input was already outside the set.
    pub admissible: bool,
}

/// Largest step `kappa` in [0, 1] along `r - v_prev` that stays in the set,
/// by bisection to 1e-9.
pub fn srg_kappa(oinf: &OInfApprox, x: &DVector<f64>, v_prev: &DVector<f64>, r: &DVector<f64>) -> SrgOutcome {
    if !oinf.contains(x, v_prev) {
        return SrgOutcome {
            kappa: 0.0,
            admissible: false,
        };
    }
    let dir = r - v_prev;
    let inside = |k: f64| oinf.contains(x, &(v_prev + &dir * k));
    if inside(1.0) {
        return SrgOutcome {
            kappa: 1.0,
            admissible: true,
        };
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    SrgOutcome {
        kappa: lo,
        admissible: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    /// No constraint active; the reference passes through.
    Transparent,
    /// The reference itself is admissible.
    Accepted,
    Optimal,
    /// The current state already breaks a bound; solved over the rows the
    /// input can still influence.
    Recovered,
    /// No admissible input at this state; the previous input is held.
    Infeasible,
}

impl QpStatus {
    pub fn name(self) -> &'static str {
        match self {
            QpStatus::Transparent => "transparent",
            QpStatus::Accepted => "accepted",
            QpStatus::Optimal => "optimal",
            QpStatus::Recovered => "recovered",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution {
    pub v: DVector<f64>,
    pub status: QpStatus,
    /// `(v - r)' Q (v - r)` at the returned input.
    pub objective: f64,
    pub sweeps: usize,
}

/// Minimise `(v - r)' Q (v - r)` over the set's rows at fixed `x` by
/// Hildreth's dual coordinate ascent.
pub fn cg_solve(
    oinf: &OInfApprox,
    x: &DVector<f64>,
    r: &DVector<f64>,
    v_prev: &DVector<f64>,
    q: &DMatrix<f64>,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<CgSolution> {
    let q_inv = q
        .clone()
        .cholesky()
        .ok_or_else(|| PsmError::Config("governor weight Q must be positive definite".into()))?
        .inverse();
    let objective = |v: &DVector<f64>| {
        let e = v - r;
        (e.transpose() * q * &e)[(0, 0)]
    };
    let (m_all, g_all) = oinf.input_rows(x);
    if (&m_all * r - &g_all).max() <= 0.0 {
        return Ok(CgSolution {
            v: r.clone(),
            status: QpStatus::Accepted,
            objective: 0.0,
            sweeps: 0,
        });
    }
    let infeasible = |sweeps| CgSolution {
        v: v_prev.clone(),
        status: QpStatus::Infeasible,
        objective: objective(v_prev),
        sweeps,
    };

    // normalise rows, drop input-free rows and keep the tightest of any
    // rows sharing a direction (late horizon rows converge to each other)
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..m_all.nrows() {
        let m = m_all.row(i).transpose();
        let norm = m.norm();
        if norm < 1e-12 {
            if g_all[i] < -tolerance {
                return Ok(infeasible(0));
            }
            continue;
        }
        let (m, g) = (m / norm, g_all[i] / norm);
        match rows.iter_mut().find(|(n, _)| (n - &m).amax() < 1e-12) {
            Some(existing) => existing.1 = existing.1.min(g),
            None => rows.push((m, g)),
        }
    }
    let n = rows.len();
    let m = DMatrix::from_fn(n, r.len(), |i, j| rows[i].0[j]);
    let g = DVector::from_fn(n, |i, _| rows[i].1);
    let p_mat = &m * &q_inv * m.transpose() * 0.5;
    let k = &g - &m * r;

    let mut lambda = DVector::<f64>::zeros(n);
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut change = 0.0f64;
        for i in 0..n {
            let pii = p_mat[(i, i)];
            let cross = p_mat.row(i).dot(&lambda.transpose()) - pii * lambda[i];
            let next = (-(k[i] + cross) / pii).max(0.0);
            change = change.max((next - lambda[i]).abs() * pii.sqrt());
            lambda[i] = next;
        }
        if !lambda.iter().all(|l| l.is_finite() && *l < 1e12) {
            return Ok(infeasible(sweeps));
        }
        if change < tolerance {
            break;
        }
    }
    let v = r - &q_inv * m.transpose() * &lambda * 0.5;
    if (&m_all * &v - &g_all).max() > 1e-6 {
        return Ok(infeasible(sweeps));
    }
    Ok(CgSolution {
        objective: objective(&v),
        v,
        status: QpStatus::Optimal,
        sweeps,
    })
}
