//! A named similarity index plus its parameters, evaluable on raw activations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ccafam::{
    canonical_ridge_with_tol, cca_with_tol, linear_regression_r2_with_tol, procrustes_nuclear, pwcca_impl,
    svcca_with_tol, RidgeNormalization, RidgeParams, SvccaParams,
};
use crate::cka::{kernel_cka, kernel_hsic, SimilarityScore};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::reprdata::{center_columns, check_same_n, ActivationMatrix, DEFAULT_RANK_TOL};

/// Which argument is regressed on which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionDirection {
    /// Target is the first argument, design is the second.
    #[default]
    FirstOnSecond,
    SecondOnFirst,
}

impl RegressionDirection {
    pub fn name(&self) -> &'static str {
        match self {
            RegressionDirection::FirstOnSecond => "first-on-second",
            RegressionDirection::SecondOnFirst => "second-on-first",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SimilarityIndex {
    CkaLinear,
    CkaRbf { bandwidth_fraction: f64 },
    HsicLinear,
    HsicRbf { bandwidth_fraction: f64 },
    CcaR2,
    CcaRho,
    SvccaR2 { variance_threshold: f64 },
    SvccaRho { variance_threshold: f64 },
    Pwcca,
    PwccaModified,
    Linreg { direction: RegressionDirection },
    Ridge {
        kappa_x: f64,
        kappa_y: f64,
        normalization: RidgeNormalization,
    },
    Procrustes,
}

pub const INDEX_NAMES: [&str; 13] = [
    "cka-linear",
    "cka-rbf",
    "hsic-linear",
    "hsic-rbf",
    "cca-r2",
    "cca-rho",
    "svcca-r2",
    "svcca-rho",
    "pwcca",
    "pwcca-modified",
    "linreg",
    "ridge",
    "procrustes",
];

/// Optional parameters supplied alongside an index name.
#[derive(Debug, Clone, Default)]
pub struct IndexParams {
    pub bandwidth_fraction: Option<f64>,
    pub variance_threshold: Option<f64>,
    pub kappa_x: Option<f64>,
    pub kappa_y: Option<f64>,
    pub normalization: Option<RidgeNormalization>,
    pub direction: Option<RegressionDirection>,
}

impl SimilarityIndex {
    /// Builds an index from its name; parameters must be present exactly when the index uses them.
    pub fn from_parts(name: &str, params: &IndexParams) -> Result<Self> {
        let uses_bw = matches!(name, "cka-rbf" | "hsic-rbf");
        let uses_thr = matches!(name, "svcca-r2" | "svcca-rho");
        let uses_ridge = name == "ridge";
        let uses_dir = name == "linreg";
        let stray = |flag: &str, present: bool, used: bool| -> Result<()> {
            if present && !used {
                Err(Error::validation(format!("index {name} does not take {flag}")))
            } else {
                Ok(())
            }
        };
        stray("--bandwidth-fraction", params.bandwidth_fraction.is_some(), uses_bw)?;
        stray("--variance-threshold", params.variance_threshold.is_some(), uses_thr)?;
        stray("--kappa-x", params.kappa_x.is_some(), uses_ridge)?;
        stray("--kappa-y", params.kappa_y.is_some(), uses_ridge)?;
        stray("--normalization", params.normalization.is_some(), uses_ridge)?;
        stray("--direction", params.direction.is_some(), uses_dir)?;

        let need = |flag: &str, v: Option<f64>| -> Result<f64> {
            v.ok_or_else(|| Error::validation(format!("index {name} requires {flag}")))
        };
        let idx = match name {
            "cka-linear" => Self::CkaLinear,
            "cka-rbf" => Self::CkaRbf {
                bandwidth_fraction: need("--bandwidth-fraction", params.bandwidth_fraction)?,
            },
            "hsic-linear" => Self::HsicLinear,
            "hsic-rbf" => Self::HsicRbf {
                bandwidth_fraction: need("--bandwidth-fraction", params.bandwidth_fraction)?,
            },
            "cca-r2" => Self::CcaR2,
            "cca-rho" => Self::CcaRho,
            "svcca-r2" => Self::SvccaR2 {
                variance_threshold: need("--variance-threshold", params.variance_threshold)?,
            },
            "svcca-rho" => Self::SvccaRho {
                variance_threshold: need("--variance-threshold", params.variance_threshold)?,
            },
            "pwcca" => Self::Pwcca,
            "pwcca-modified" => Self::PwccaModified,
            "linreg" => Self::Linreg {
                direction: params.direction.unwrap_or_default(),
            },
            "ridge" => Self::Ridge {
                kappa_x: need("--kappa-x", params.kappa_x)?,
                kappa_y: need("--kappa-y", params.kappa_y)?,
                normalization: params
                    .normalization
                    .ok_or_else(|| Error::validation("index ridge requires --normalization"))?,
            },
            "procrustes" => Self::Procrustes,
            other => {
                return Err(Error::validation(format!(
                    "unknown index {other:?}; expected one of {}",
                    INDEX_NAMES.join(", ")
                )))
            }
        };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::CkaRbf { bandwidth_fraction } | Self::HsicRbf { bandwidth_fraction } => {
                KernelSpec::rbf(bandwidth_fraction).map(|_| ())
            }
            Self::SvccaR2 { variance_threshold } | Self::SvccaRho { variance_threshold } => {
                SvccaParams::new(variance_threshold).map(|_| ())
            }
            Self::Ridge {
                kappa_x,
                kappa_y,
                normalization,
            } => RidgeParams::new(kappa_x, kappa_y, normalization).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CkaLinear => "cka-linear",
            Self::CkaRbf { .. } => "cka-rbf",
            Self::HsicLinear => "hsic-linear",
            Self::HsicRbf { .. } => "hsic-rbf",
            Self::CcaR2 => "cca-r2",
            Self::CcaRho => "cca-rho",
            Self::SvccaR2 { .. } => "svcca-r2",
            Self::SvccaRho { .. } => "svcca-rho",
            Self::Pwcca => "pwcca",
            Self::PwccaModified => "pwcca-modified",
            Self::Linreg { .. } => "linreg",
            Self::Ridge { .. } => "ridge",
            Self::Procrustes => "procrustes",
        }
    }

    /// `s(X, Y) = s(Y, X)` for all inputs.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Pwcca | Self::PwccaModified | Self::Linreg { .. } => false,
            Self::Ridge {
                kappa_x, kappa_y, ..
            } => kappa_x == kappa_y,
            _ => true,
        }
    }

    /// Bounded to [0, 1].
    pub fn is_normalized(&self) -> bool {
        !matches!(self, Self::HsicLinear | Self::HsicRbf { .. } | Self::Procrustes)
    }

    pub fn kernel(&self) -> Option<KernelSpec> {
        match *self {
            Self::CkaLinear | Self::HsicLinear => Some(KernelSpec::Linear),
            Self::CkaRbf { bandwidth_fraction } | Self::HsicRbf { bandwidth_fraction } => {
                Some(KernelSpec::Rbf { bandwidth_fraction })
            }
            _ => None,
        }
    }

    /// Free-form note on argument order for asymmetric indexes.
    pub fn direction_note(&self) -> Option<&'static str> {
        match self {
            Self::Pwcca | Self::PwccaModified => Some("weights from first argument"),
            Self::Linreg {
                direction: RegressionDirection::FirstOnSecond,
            } => Some("first argument regressed on second"),
            Self::Linreg {
                direction: RegressionDirection::SecondOnFirst,
            } => Some("second argument regressed on first"),
            Self::Ridge { .. } if !self.is_symmetric() => Some("kappa_x applies to first argument"),
            _ => None,
        }
    }

    /// Centers both inputs and evaluates.
    pub fn evaluate(&self, x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
        self.evaluate_with_tol(x, y, DEFAULT_RANK_TOL)
    }

    /// As [`evaluate`](Self::evaluate), with `rank_tol` deciding numerical rank
    /// for the CCA family (relative to the largest singular value).
    pub fn evaluate_with_tol(
        &self,
        x: &ActivationMatrix,
        y: &ActivationMatrix,
        rank_tol: f64,
    ) -> Result<SimilarityScore> {
        if !(rank_tol.is_finite() && rank_tol > 0.0 && rank_tol < 1.0) {
            return Err(Error::validation(format!("rank tolerance must lie in (0, 1), got {rank_tol}")));
        }
        check_same_n(x, y)?;
        let (x, y) = (center_columns(x), center_columns(y));
        let mut score = match *self {
            Self::CkaLinear | Self::CkaRbf { .. } => kernel_cka(&x, &y, self.kernel().unwrap())?,
            Self::HsicLinear | Self::HsicRbf { .. } => kernel_hsic(&x, &y, self.kernel().unwrap())?,
            Self::CcaR2 => cca_with_tol(&x, &y, rank_tol)?.r2(),
            Self::CcaRho => cca_with_tol(&x, &y, rank_tol)?.rho_bar(),
            Self::SvccaR2 { variance_threshold } => {
                svcca_with_tol(&x, &y, SvccaParams::new(variance_threshold)?, rank_tol)?.r2
            }
            Self::SvccaRho { variance_threshold } => {
                svcca_with_tol(&x, &y, SvccaParams::new(variance_threshold)?, rank_tol)?.rho_bar
            }
            Self::Pwcca => SimilarityScore::normalized("pwcca", pwcca_impl(&x, &y, false, rank_tol)?),
            Self::PwccaModified => {
                SimilarityScore::normalized("pwcca-modified", pwcca_impl(&x, &y, true, rank_tol)?)
            }
            Self::Linreg { direction } => match direction {
                RegressionDirection::FirstOnSecond => linear_regression_r2_with_tol(&x, &y, rank_tol)?,
                RegressionDirection::SecondOnFirst => linear_regression_r2_with_tol(&y, &x, rank_tol)?,
            },
            Self::Ridge {
                kappa_x,
                kappa_y,
                normalization,
            } => canonical_ridge_with_tol(&x, &y, RidgeParams::new(kappa_x, kappa_y, normalization)?, rank_tol)?,
            Self::Procrustes => procrustes_nuclear(&x, &y)?,
        };
        score.index_name = self.name().to_string();
        Ok(score)
    }
}

impl fmt::Display for SimilarityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
