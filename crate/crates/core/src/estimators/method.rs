use crate::cps::GammaWeight;
use crate::error::{Error, Result};

/// Kernel pairing of an estimator: covariant (c) or not (x) on the density
/// and observable sides, or window-window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcfClass {
    Cc,
    Cx,
    Xc,
    Ww,
}

/// Estimator family with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum MethodSpec {
    /// Covariant density kernel, inverse observable kernel, one sphere.
    Cmm { gamma: f64 },
    /// Self-dual kernels over a weighted family of spheres.
    Wmm { weight: GammaWeight },
    /// Sphere at `gamma` with commutator matrix `Gamma = gamma I + sigma G`,
    /// `G` a traceless GUE draw per trajectory. With `classify` the
    /// component of every initial density kernel is tallied.
    Cmmcv { gamma: f64, sigma: f64, classify: bool },
    /// Covariant density kernel, cornered-simplex window on the observable.
    CorneredSimplex { gamma: f64 },
    /// Triangle-window density kernel; the observable is the covariant
    /// kernel on the sampled shell, or at `gamma = 1/3` when `fixed_gamma`.
    TriangleSqc { fixed_gamma: bool },
    Ehrenfest,
    LambdaPoint { gamma: f64 },
    Dtwa,
    Gdtwa,
    TriangleWw,
    TriangleF2Single { gamma: f64 },
    HillWw { gamma: f64 },
}

impl MethodSpec {
    pub fn class(&self) -> TcfClass {
        match self {
            Self::Cmm { .. } | Self::Wmm { .. } | Self::Cmmcv { .. } => TcfClass::Cc,
            Self::CorneredSimplex { .. } => TcfClass::Cx,
            Self::TriangleSqc { .. } | Self::Ehrenfest | Self::LambdaPoint { .. } | Self::Dtwa | Self::Gdtwa => {
                TcfClass::Xc
            }
            Self::TriangleWw | Self::TriangleF2Single { .. } | Self::HillWw { .. } => TcfClass::Ww,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cmm { .. } => "cmm",
            Self::Wmm { .. } => "wmm",
            Self::Cmmcv { .. } => "cmmcv",
            Self::CorneredSimplex { .. } => "cornered_simplex",
            Self::TriangleSqc { .. } => "triangle_sqc",
            Self::Ehrenfest => "ehrenfest",
            Self::LambdaPoint { .. } => "lambda_point",
            Self::Dtwa => "dtwa",
            Self::Gdtwa => "gdtwa",
            Self::TriangleWw => "triangle_ww",
            Self::TriangleF2Single { .. } => "triangle_f2_single",
            Self::HillWw { .. } => "hill_ww",
        }
    }

    /// Sphere parameter used by the family, where it has one.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            Self::Cmm { gamma }
            | Self::Cmmcv { gamma, .. }
            | Self::CorneredSimplex { gamma }
            | Self::LambdaPoint { gamma }
            | Self::TriangleF2Single { gamma }
            | Self::HillWw { gamma } => Some(*gamma),
            Self::Ehrenfest => Some(0.0),
            _ => None,
        }
    }

    /// Family-specific domain checks for an `F`-state system.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let lower = -1.0 / dim as f64;
        let positive = |g: f64, what: &str| {
            if g > 0.0 && g.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{what} requires gamma > 0, got {g}")))
            }
        };
        match self {
            Self::CorneredSimplex { gamma } => positive(*gamma, "cornered_simplex")?,
            Self::LambdaPoint { gamma } => positive(*gamma, "lambda_point")?,
            Self::Dtwa if dim != 2 => {
                return Err(Error::Unsupported(format!("dtwa is defined for F = 2 only (F = {dim}); use gdtwa")))
            }
            Self::Gdtwa if dim < 3 => {
                return Err(Error::Unsupported(format!("gdtwa needs F >= 3 (F = {dim}); use dtwa")))
            }
            Self::TriangleF2Single { .. } if dim != 2 => {
                return Err(Error::Unsupported(format!("triangle_f2_single needs F = 2 (F = {dim})")))
            }
            Self::Cmmcv { sigma, .. } if !(*sigma >= 0.0) || !sigma.is_finite() => {
                return Err(Error::Domain(format!("cmmcv spread sigma = {sigma} must be >= 0")))
            }
            Self::Wmm { weight } => weight.validate(dim)?,
            _ => {}
        }
        if dim < 2 && matches!(self, Self::TriangleSqc { .. } | Self::TriangleWw) {
            return Err(Error::Unsupported("triangle windows need F >= 2".into()));
        }
        if let Some(g) = self.gamma() {
            if !(g > lower) || !g.is_finite() {
                return Err(Error::Domain(format!("gamma = {g} must exceed -1/F = {lower}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(MethodSpec::Cmm { gamma: 0.0 }.class(), TcfClass::Cc);
        assert_eq!(MethodSpec::CorneredSimplex { gamma: 1.0 }.class(), TcfClass::Cx);
        assert_eq!(MethodSpec::Gdtwa.class(), TcfClass::Xc);
        assert_eq!(MethodSpec::HillWw { gamma: 0.0 }.class(), TcfClass::Ww);
    }

    #[test]
    fn domain_checks() {
        assert!(MethodSpec::CorneredSimplex { gamma: 0.0 }.validate(2).is_err());
        assert!(MethodSpec::LambdaPoint { gamma: -0.1 }.validate(3).is_err());
        assert!(matches!(MethodSpec::Dtwa.validate(3), Err(Error::Unsupported(_))));
        assert!(matches!(MethodSpec::Gdtwa.validate(2), Err(Error::Unsupported(_))));
        assert!(MethodSpec::TriangleF2Single { gamma: 0.0 }.validate(3).is_err());
        assert!(MethodSpec::Cmm { gamma: -0.5 }.validate(2).is_err());
        MethodSpec::Cmm { gamma: -0.4 }.validate(2).unwrap();
        MethodSpec::Gdtwa.validate(4).unwrap();
        assert_eq!(MethodSpec::Ehrenfest.gamma(), Some(0.0));
    }
}
