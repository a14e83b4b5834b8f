//! Archimedean generators with completely monotone (Laplace transform) form.
//!
//! All three families belong to the power variance function (PVF) family of
//! mixing distributions, whose Laplace transform is
//!
//! ```text
//! L(s)     = exp(-(delta/alpha) * ((gamma + s)^alpha - gamma^alpha))
//! L^(k)(s) = (-1)^k L(s) * sum_{j=1..k} c[k][j](alpha) * delta^j * (gamma + s)^(j*alpha - k)
//! ```
//!
//! with `c[k][1] = Gamma(k - alpha) / Gamma(1 - alpha)`, `c[k][k] = 1` and
//! `c[k][j] = c[k-1][j-1] + c[k-1][j] * (k - 1 - j*alpha)`.
//!
//! | family           | generator                           | alpha | delta           | gamma        |
//! |------------------|-------------------------------------|-------|-----------------|--------------|
//! | Clayton          | `(1 + theta s)^(-1/theta)`          | 0     | `1/theta`       | `1/theta`    |
//! | Gumbel-Hougaard  | `exp(-s^theta)`                     | theta | theta           | 0            |
//! | inverse Gaussian | `exp(1/theta - sqrt(1/theta^2 + 2s/theta))` | 1/2 | `(2theta)^(-1/2)` | `(2theta)^(-1)` |
//!
//! Derivatives are returned as [`SignedLog`] values. Orders of 150 and more
//! overflow in linear arithmetic.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{self, exp, expm1, lgamma, ln, log1p, log_add_exp, logistic, logit, pow, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Clayton,
    #[cfg_attr(feature = "serde", serde(rename = "gumbel"))]
    GumbelHougaard,
    #[cfg_attr(feature = "serde", serde(rename = "invgauss"))]
    InverseGaussian,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Clayton, Family::GumbelHougaard, Family::InverseGaussian];

    /// Short identifier used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Family::Clayton => "clayton",
            Family::GumbelHougaard => "gumbel",
            Family::InverseGaussian => "invgauss",
        }
    }

    pub fn contains(self, theta: f64) -> bool {
        match self {
            Family::Clayton | Family::InverseGaussian => theta > 0.0 && theta.is_finite(),
            Family::GumbelHougaard => theta > 0.0 && theta < 1.0,
        }
    }

    /// Map theta onto the real line: log for Clayton and inverse Gaussian,
    /// logit for Gumbel-Hougaard.
    pub fn to_unconstrained(self, theta: f64) -> f64 {
        match self {
            Family::Clayton | Family::InverseGaussian => ln(theta),
            Family::GumbelHougaard => logit(theta),
        }
    }

    pub fn from_unconstrained(self, eta: f64) -> f64 {
        match self {
            Family::Clayton | Family::InverseGaussian => exp(eta),
            Family::GumbelHougaard => logistic(eta),
        }
    }

    /// `d theta / d eta` at the unconstrained value `eta`.
    pub fn theta_jacobian(self, eta: f64) -> f64 {
        match self {
            Family::Clayton | Family::InverseGaussian => exp(eta),
            Family::GumbelHougaard => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
        }
    }

    /// The PVF `alpha` a coefficient table must carry for this family.
    pub fn table_alpha(self, theta: f64) -> f64 {
        match self {
            Family::Clayton => 0.0,
            Family::GumbelHougaard => theta,
            Family::InverseGaussian => 0.5,
        }
    }

    /// Theta close to independence: Clayton and inverse Gaussian as theta -> 0,
    /// Gumbel-Hougaard as theta -> 1.
    pub fn independence_theta(self) -> f64 {
        match self {
            Family::Clayton | Family::InverseGaussian => 1e-8,
            Family::GumbelHougaard => 1.0 - 1e-8,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" | "gamma" => Ok(Family::Clayton),
            "gumbel" | "gumbel-hougaard" | "positive-stable" => Ok(Family::GumbelHougaard),
            "invgauss" | "inverse-gaussian" | "ig" => Ok(Family::InverseGaussian),
            other => Err(Error::Domain(alloc::format!(
                "unknown copula family '{other}' (expected clayton, gumbel or invgauss)"
            ))),
        }
    }
}

/// A value `sign * exp(log_abs)`; `sign == 0` means exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub log_abs: f64,
    pub sign: i8,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog { log_abs: f64::NEG_INFINITY, sign: 0 };

    pub fn new(log_abs: f64, sign: i8) -> Self {
        SignedLog { log_abs, sign }
    }

    pub fn from_value(v: f64) -> Self {
        if v == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog { log_abs: ln(math::abs(v)), sign: if v > 0.0 { 1 } else { -1 } }
        }
    }

    pub fn value(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * exp(self.log_abs),
        }
    }
}

/// PVF parameters `(alpha, delta, gamma)` of a mixing distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvfParams {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl PvfParams {
    /// `ln L(s)`; the `alpha = 0` case is the gamma limit
    /// `-delta * ln(1 + s/gamma)`.
    pub fn log_laplace(&self, s: f64) -> f64 {
        if self.alpha == 0.0 {
            -self.delta * log1p(s / self.gamma)
        } else if self.gamma == 0.0 {
            -(self.delta / self.alpha) * pow(s, self.alpha)
        } else {
            // (gamma+s)^a - gamma^a = gamma^a * expm1(a * ln(1 + s/gamma))
            let g_a = pow(self.gamma, self.alpha);
            -(self.delta / self.alpha) * g_a * expm1(self.alpha * log1p(s / self.gamma))
        }
    }

    /// k-th derivative of the Laplace transform through the coefficient sum.
    pub fn derivative(&self, s: f64, k: usize, table: &CoefficientTable) -> Result<SignedLog> {
        if !(s >= 0.0) {
            return Err(Error::Domain(alloc::format!("generator argument must be >= 0, got {s}")));
        }
        if k > table.max_order() {
            return Err(Error::TableTooSmall { needed: k, have: table.max_order() });
        }
        if table.alpha() != self.alpha {
            return Err(Error::TableMismatch { table: table.alpha(), generator: self.alpha });
        }
        let log_l = self.log_laplace(s);
        if k == 0 {
            return Ok(SignedLog::new(log_l, 1));
        }
        let base = self.gamma + s;
        if base == 0.0 {
            return Err(Error::SingularPoint { family: Family::GumbelHougaard, order: k });
        }
        let log_base = ln(base);
        let log_delta = ln(self.delta);
        let kf = k as f64;
        // Online log-sum-exp over strictly positive terms.
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for j in 1..=k {
            let jf = j as f64;
            let term = table.log_coefficient(k, j) + jf * log_delta + (jf * self.alpha - kf) * log_base;
            if term > max {
                acc = acc * exp(max - term) + 1.0;
                max = term;
            } else {
                acc += exp(term - max);
            }
        }
        let sign = if k.is_multiple_of(2) { 1 } else { -1 };
        Ok(SignedLog::new(log_l + max + ln(acc), sign))
    }
}

/// Log-coefficients `ln c[k][j](alpha)` for `1 <= j <= k <= max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    max_order: usize,
    alpha: f64,
    log_c: Vec<f64>,
}

impl CoefficientTable {
    pub fn new(max_order: usize, alpha: f64) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Domain("coefficient table needs max_order >= 1".into()));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Domain(alloc::format!("PVF alpha must lie in [0, 1), got {alpha}")));
        }
        let mut log_c = Vec::with_capacity(max_order * (max_order + 1) / 2);
        let lg_one_minus = lgamma(1.0 - alpha);
        log_c.push(0.0); // c[1][1]
        for k in 2..=max_order {
            let prev = (k - 1) * (k - 2) / 2;
            log_c.push(lgamma(k as f64 - alpha) - lg_one_minus);
            for j in 2..k {
                let factor = (k - 1) as f64 - j as f64 * alpha;
                let a = log_c[prev + j - 2];
                let b = log_c[prev + j - 1] + ln(factor);
                log_c.push(log_add_exp(a, b));
            }
            log_c.push(0.0); // c[k][k]
        }
        Ok(CoefficientTable { max_order, alpha, log_c })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ln c[k][j]`; panics outside `1 <= j <= k <= max_order`.
    #[inline]
    pub fn log_coefficient(&self, k: usize, j: usize) -> f64 {
        assert!(j >= 1 && j <= k && k <= self.max_order, "coefficient index ({k}, {j}) out of range");
        self.log_c[k * (k - 1) / 2 + j - 1]
    }

    pub fn coefficient(&self, k: usize, j: usize) -> f64 {
        exp(self.log_coefficient(k, j))
    }
}

pub fn pvf_coefficients(max_order: usize, alpha: f64) -> Result<CoefficientTable> {
    CoefficientTable::new(max_order, alpha)
}

/// A generator `phi_theta` of one of the three families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    family: Family,
    theta: f64,
}

impl Generator {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        if !family.contains(theta) {
            return Err(Error::ParameterDomain { family, theta });
        }
        Ok(Generator { family, theta })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn pvf(&self) -> PvfParams {
        let t = self.theta;
        match self.family {
            Family::Clayton => PvfParams { alpha: 0.0, delta: 1.0 / t, gamma: 1.0 / t },
            Family::GumbelHougaard => PvfParams { alpha: t, delta: t, gamma: 0.0 },
            Family::InverseGaussian => {
                PvfParams { alpha: 0.5, delta: 1.0 / sqrt(2.0 * t), gamma: 1.0 / (2.0 * t) }
            }
        }
    }

    pub fn table_alpha(&self) -> f64 {
        self.family.table_alpha(self.theta)
    }

    /// `ln phi(s)` for `s >= 0`.
    pub fn log_phi(&self, s: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Clayton => -log1p(t * s) / t,
            Family::GumbelHougaard => -pow(s, t),
            Family::InverseGaussian => {
                // 1/t - sqrt(1/t^2 + 2s/t), rationalised against cancellation
                let a = 1.0 / t;
                -2.0 * s / t / (a + sqrt(a * a + 2.0 * s / t))
            }
        }
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(alloc::format!("generator argument must be >= 0, got {s}")));
        }
        Ok(exp(self.log_phi(s)))
    }

    pub fn phi_inv(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(alloc::format!("phi_inv needs 0 < u <= 1, got {u}")));
        }
        self.phi_inv_log(ln(u))
    }

    /// `phi^{-1}(exp(log_u))` computed from `ln u`, so survival values far
    /// below the smallest double remain usable.
    pub fn phi_inv_log(&self, log_u: f64) -> Result<f64> {
        if !(log_u <= 0.0) {
            return Err(Error::Domain(alloc::format!("phi_inv needs ln u <= 0, got {log_u}")));
        }
        let t = self.theta;
        let x = -log_u;
        Ok(match self.family {
            Family::Clayton => expm1(t * x) / t,
            Family::GumbelHougaard => pow(x, 1.0 / t),
            Family::InverseGaussian => x + 0.5 * t * x * x,
        })
    }

    /// `ln |phi'(s)|`; `+inf` for Gumbel-Hougaard at `s = 0`.
    #[inline]
    pub fn log_neg_phi_prime(&self, s: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Clayton => -(1.0 / t + 1.0) * log1p(t * s),
            Family::GumbelHougaard => ln(t) + (t - 1.0) * ln(s) - pow(s, t),
            Family::InverseGaussian => {
                let p = self.pvf();
                self.log_phi(s) + ln(p.delta) - 0.5 * ln(p.gamma + s)
            }
        }
    }

    /// k-th derivative of the generator at `s`. Clayton uses the exact
    /// product `(-1)^k (1 + theta s)^(-1/theta - k) prod_{j<k} (1 + j theta)`;
    /// the other families go through the PVF coefficient sum.
    pub fn phi_deriv(&self, s: f64, k: usize, table: &CoefficientTable) -> Result<SignedLog> {
        if !(s >= 0.0) {
            return Err(Error::Domain(alloc::format!("generator argument must be >= 0, got {s}")));
        }
        if k > table.max_order() {
            return Err(Error::TableTooSmall { needed: k, have: table.max_order() });
        }
        let alpha = self.table_alpha();
        if table.alpha() != alpha {
            return Err(Error::TableMismatch { table: table.alpha(), generator: alpha });
        }
        match self.family {
            Family::Clayton => {
                let t = self.theta;
                let mut log_abs = -(1.0 / t + k as f64) * log1p(t * s);
                for j in 1..k {
                    log_abs += log1p(j as f64 * t);
                }
                let sign = if k.is_multiple_of(2) { 1 } else { -1 };
                Ok(SignedLog::new(log_abs, sign))
            }
            Family::GumbelHougaard if s == 0.0 && k > 0 => {
                Err(Error::SingularPoint { family: self.family, order: k })
            }
            _ => self.pvf().derivative(s, k, table),
        }
    }

    /// Kendall's tau `1 + 4 * int_0^1 phi^{-1}(t) phi'(phi^{-1}(t)) dt`, by
    /// adaptive Gauss-Kronrod quadrature.
    pub fn kendall_tau(&self) -> Result<f64> {
        let table = CoefficientTable::new(1, self.table_alpha())?;
        let mut failure = None;
        let integral = math::integrate(
            |t| {
                let s = match self.phi_inv(t) {
                    Ok(s) => s,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return 0.0;
                    }
                };
                if s == 0.0 || s.is_infinite() {
                    // s * phi'(s) -> 0 at both ends for all three families
                    return 0.0;
                }
                match self.phi_deriv(s, 1, &table) {
                    Ok(d) => s * d.value(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            0.0,
            1.0,
            1e-9,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(1.0 + 4.0 * integral)
    }
}
