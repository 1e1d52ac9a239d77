//! Integrator-chain plants and the per-agent stabilization machinery: the
//! scaled change of variables that collapses a length-`n` chain into a
//! stable subsystem plus a scalar tracking coordinate, the Hurwitz checks
//! on the stabilizing coefficients, and the Lyapunov certificate for the
//! translated subsystem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One agent's plant: a chain of `order` integrators driven through an
/// unknown-sign control gain, `y^(order) = gain * u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentDynamics {
    order: usize,
    gain: f64,
}

impl AgentDynamics {
    pub fn new(order: usize, gain: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidScenario {
                reason: "agent order must be at least 1".into(),
            });
        }
        if !gain.is_finite() || gain == 0.0 {
            return Err(Error::InvalidScenario {
                reason: format!("control gain must be finite and nonzero, got {gain}"),
            });
        }
        Ok(Self { order, gain })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

/// Time derivative of the chain state `x = (y, y', ..., y^(order-1))`
/// under input `u`.
pub fn plant_derivative(x: &[f64], dynamics: &AgentDynamics, u: f64) -> Result<Vec<f64>> {
    if x.len() != dynamics.order {
        return Err(Error::DimensionMismatch {
            what: "plant state length",
            expected: dynamics.order,
            got: x.len(),
        });
    }
    if !u.is_finite() {
        return Err(Error::NonFinite {
            what: "control input",
            value: u,
        });
    }
    let mut dx = Vec::with_capacity(x.len());
    dx.extend_from_slice(&x[1..]);
    dx.push(dynamics.gain * u);
    Ok(dx)
}

/// Default stabilizing coefficients for a chain of length `n`: the
/// binomial row that places every subsystem pole at -1, i.e. the
/// coefficients of `(s + 1)^(n-1)` below the leading term.
pub fn default_stabilizing_coeffs(n: usize) -> Vec<f64> {
    let m = n.saturating_sub(1);
    let mut coeffs = Vec::with_capacity(m);
    let mut binom = 1.0;
    for j in 0..m {
        coeffs.push(binom);
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    coeffs
}

/// Companion matrix of `s^m + k_m s^(m-1) + ... + k_1` for
/// `coeffs = [k_1, ..., k_m]`.
fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let m = coeffs.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, &k) in coeffs.iter().enumerate() {
        a[(m - 1, j)] = -k;
    }
    a
}

/// True when every root of `s^m + k_m s^(m-1) + ... + k_1` has real part
/// below `-1e-9`.  The empty coefficient list (a length-1 chain has no
/// subsystem to stabilize) counts as Hurwitz.
pub fn is_hurwitz(coeffs: &[f64]) -> bool {
    if coeffs.is_empty() {
        return true;
    }
    if coeffs.iter().any(|k| !k.is_finite()) {
        return false;
    }
    companion(coeffs)
        .complex_eigenvalues()
        .iter()
        .all(|l| l.re < -1e-9)
}

/// The matrices of the translated per-agent system, plus the Lyapunov
/// certificate for its stable block.
///
/// For a chain of length `n` with coefficients `k = (k_1, ..., k_(n-1))`
/// and derivative scale `eps`, the translated state splits into the
/// subsystem coordinates (tracking error and scaled derivatives, dimension
/// `n - 1`) and the scalar `zeta`.  `a1` is the subsystem companion
/// matrix, `a2`/`e1` its couplings to `zeta` and the reference rate, `a3`,
/// `a4`, `e2` the corresponding rows of the `zeta` dynamics (`a3` is kept
/// empty below order 3, where the subsystem has nothing left to couple
/// back), and `p` solves `a1^T p + p a1 = -2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationData {
    pub order: usize,
    pub coeffs: Vec<f64>,
    pub eps: f64,
    pub a1: DMatrix<f64>,
    pub a2: DVector<f64>,
    pub a3: DMatrix<f64>,
    pub a4: Option<f64>,
    pub e1: DVector<f64>,
    pub e2: Option<f64>,
    pub p: DMatrix<f64>,
}

/// Builds [`TranslationData`] for a chain of length `order`, rejecting
/// coefficient vectors that are not Hurwitz.
pub fn build_translation(order: usize, coeffs: &[f64], eps: f64) -> Result<TranslationData> {
    if order == 0 {
        return Err(Error::InvalidScenario {
            reason: "agent order must be at least 1".into(),
        });
    }
    if coeffs.len() != order - 1 {
        return Err(Error::DimensionMismatch {
            what: "stabilizing coefficients",
            expected: order - 1,
            got: coeffs.len(),
        });
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidScenario {
            reason: format!("derivative scale eps must be positive, got {eps}"),
        });
    }
    if !is_hurwitz(coeffs) {
        return Err(Error::NotHurwitz {
            coeffs: coeffs.to_vec(),
        });
    }

    let m = order - 1;
    let a1 = companion(coeffs);
    let mut a2 = DVector::zeros(m);
    let mut e1 = DVector::zeros(m);
    if m > 0 {
        a2[m - 1] = 1.0;
        e1[0] = 1.0;
    }
    let a3 = if m >= 2 {
        let km = coeffs[m - 1];
        let mut row = DMatrix::zeros(1, m);
        row[(0, 0)] = -km * coeffs[0];
        for j in 1..m {
            row[(0, j)] = coeffs[j - 1] - km * coeffs[j];
        }
        row
    } else {
        DMatrix::zeros(1, 0)
    };
    let a4 = (m > 0).then(|| coeffs[m - 1]);
    let e2 = (m > 0).then(|| -coeffs[0]);
    let p = if m > 0 {
        solve_lyapunov(&a1)?
    } else {
        DMatrix::zeros(0, 0)
    };

    Ok(TranslationData {
        order,
        coeffs: coeffs.to_vec(),
        eps,
        a1,
        a2,
        a3,
        a4,
        e1,
        e2,
        p,
    })
}

/// Solves `a^T p + p a = -2 I` for symmetric positive-definite `p` by
/// vectorizing through a Kronecker system, then verifies the residual
/// (max-abs at most 1e-10) and positive definiteness.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov matrix columns",
            expected: m,
            got: a.ncols(),
        });
    }
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(m, m);
    // vec(a^T p) + vec(p a) = (I (x) a^T + a^T (x) I) vec(p)
    let system = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_iterator(m * m, (-2.0 * &id).iter().copied());
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularLyapunov)?;
    let p = DMatrix::from_iterator(m, m, vec_p.iter().copied());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (&at * &p + &p * a + 2.0 * &id).abs().max();
    if residual > 1e-10 {
        return Err(Error::LyapunovCheck {
            reason: "residual above tolerance",
        });
    }
    if p.clone().cholesky().is_none() {
        return Err(Error::LyapunovCheck {
            reason: "solution is not positive definite",
        });
    }
    Ok(p)
}

/// The scalar tracking coordinate
/// `zeta = k_1 (y - r) + sum_i k_i eps^(i-1) y^(i-1) + eps^(n-1) y^(n-1)`
/// (for length-1 chains simply `y - r`).
pub fn zeta(x: &[f64], r: f64, td: &TranslationData) -> Result<f64> {
    if x.len() != td.order {
        return Err(Error::DimensionMismatch {
            what: "plant state length",
            expected: td.order,
            got: x.len(),
        });
    }
    let n = td.order;
    if n == 1 {
        return Ok(x[0] - r);
    }
    let mut z = td.coeffs[0] * (x[0] - r);
    let mut scale = 1.0;
    for i in 1..n - 1 {
        scale *= td.eps;
        z += td.coeffs[i] * scale * x[i];
    }
    z += scale * td.eps * x[n - 1];
    Ok(z)
}

/// Full change of variables: the subsystem coordinates
/// `(y - r, eps y', ..., eps^(n-2) y^(n-2))` plus [`zeta`].
pub fn translate_state(x: &[f64], r: f64, td: &TranslationData) -> Result<(Vec<f64>, f64)> {
    let z = zeta(x, r, td)?;
    let mut xbar = Vec::with_capacity(td.order - 1);
    let mut scale = 1.0;
    for (i, &xi) in x.iter().take(td.order - 1).enumerate() {
        xbar.push(if i == 0 { xi - r } else { scale * xi });
        scale *= td.eps;
    }
    Ok((xbar, z))
}
