use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mi,
    Ni,
    Vmi,
    Emi,
    Pgn,
    Ncs,
    Awt,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mi,
        Method::Ni,
        Method::Vmi,
        Method::Emi,
        Method::Pgn,
        Method::Ncs,
        Method::Awt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Mi => "mi",
            Method::Ni => "ni",
            Method::Vmi => "vmi",
            Method::Emi => "emi",
            Method::Pgn => "pgn",
            Method::Ncs => "ncs",
            Method::Awt => "awt",
        }
    }

    /// Methods built on the sampled neighborhood-gradient estimator.
    pub fn uses_neighborhood(self) -> bool {
        matches!(self, Method::Pgn | Method::Ncs | Method::Awt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack method {s:?}")))
    }
}

pub const DEFAULT_EPS: f64 = 16.0 / 255.0;
pub const DEFAULT_STEPS: usize = 10;

/// Every knob of the iterative attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: Method,
    /// ℓ∞ budget in pixel units.
    pub eps: f64,
    pub steps: usize,
    pub alpha: f64,
    /// Momentum decay.
    pub mu: f64,
    pub n_samples: usize,
    /// Neighborhood sampling radius.
    pub zeta: f64,
    /// Weight of the lookahead gradient in the neighborhood estimate.
    pub omega: f64,
    /// Weight-ascent step of the surrogate tuning.
    pub beta: f64,
    /// Weight-descent step of the surrogate tuning.
    pub lr: f64,
    pub rng_seed: u64,
}

impl AttackConfig {
    pub fn new(method: Method) -> Self {
        Self::with_budget(method, DEFAULT_EPS, DEFAULT_STEPS)
    }

    /// Defaults with `alpha = eps / steps` and `zeta = 3·eps`.
    pub fn with_budget(method: Method, eps: f64, steps: usize) -> Self {
        Self {
            method,
            eps,
            steps,
            alpha: if steps > 0 { eps / steps as f64 } else { eps },
            mu: 1.0,
            n_samples: 20,
            zeta: 3.0 * eps,
            omega: 0.5,
            beta: 0.005,
            lr: 0.002,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let reals = [
            ("eps", self.eps),
            ("alpha", self.alpha),
            ("mu", self.mu),
            ("zeta", self.zeta),
            ("omega", self.omega),
            ("beta", self.beta),
            ("lr", self.lr),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite, got {v}"));
        }
        if self.eps < 0.0 {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return bad(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if self.eps > 0.0 && self.alpha <= 0.0 {
            return bad(format!("alpha must be > 0 when eps > 0, got {}", self.alpha));
        }
        if self.zeta < 0.0 {
            return bad(format!("zeta must be >= 0, got {}", self.zeta));
        }
        if matches!(self.method, Method::Vmi | Method::Pgn | Method::Ncs | Method::Awt) && self.n_samples == 0 {
            return bad(format!("{} needs n_samples >= 1", self.method));
        }
        Ok(())
    }
}
