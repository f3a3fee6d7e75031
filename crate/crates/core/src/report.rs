use serde::Serialize;

use crate::scalar::Scalar;

/// Outcome of checking one inequality (or identity) on one instance.
///
/// `lhs`/`rhs` carry the extremal instance of the claim (for example the
/// smallest forward average among all stopping cubes); both are `None`
/// when the claim is vacuous.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    #[serde(rename = "inequality-id")]
    pub id: String,
    pub lhs: Option<Scalar>,
    pub rhs: Option<Scalar>,
    pub admissible: bool,
    pub pass: bool,
    pub exact: bool,
}

impl VerificationReport {
    pub fn new(id: &str, lhs: Scalar, rhs: Scalar, pass: bool) -> Self {
        let exact = lhs.is_exact() && rhs.is_exact();
        VerificationReport {
            id: id.to_string(),
            lhs: Some(lhs),
            rhs: Some(rhs),
            admissible: true,
            pass,
            exact,
        }
    }

    /// A claim with nothing to check.
    pub fn vacuous(id: &str, exact: bool) -> Self {
        VerificationReport {
            id: id.to_string(),
            lhs: None,
            rhs: None,
            admissible: true,
            pass: true,
            exact,
        }
    }

    /// Hypotheses not met: recorded, never asserted.
    pub fn inadmissible(id: &str, lhs: Option<Scalar>, rhs: Option<Scalar>, exact: bool) -> Self {
        VerificationReport {
            id: id.to_string(),
            lhs,
            rhs,
            admissible: false,
            pass: true,
            exact,
        }
    }

    pub fn with_exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    /// True unless the claim was admissible and failed.
    pub fn ok(&self) -> bool {
        !self.admissible || self.pass
    }
}

/// First failing admissible claim, if any.
pub fn first_failure(reports: &[VerificationReport]) -> Option<&VerificationReport> {
    reports.iter().find(|r| !r.ok())
}
