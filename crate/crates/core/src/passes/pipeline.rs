use std::fmt;
use std::str::FromStr;

use crate::ir::Function;

use super::{
    algebraic_simplify, assign_layouts, constant_fold, eliminate_common_subexpressions,
    LayoutPreferences, PassError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pass {
    Simplify,
    Cse,
    Fold,
    Layouts,
}

impl Pass {
    pub const ALL: [Pass; 4] = [Pass::Simplify, Pass::Cse, Pass::Fold, Pass::Layouts];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Simplify => "simplify",
            Pass::Cse => "cse",
            Pass::Fold => "fold",
            Pass::Layouts => "layouts",
        }
    }

    /// Parses a comma-separated list; blank entries are ignored.
    pub fn parse_list(list: &str) -> Result<Vec<Pass>, PassError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = PassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pass::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PassError::UnknownPass(s.to_string()))
    }
}

/// Applies `passes` in order. The input must validate.
pub fn run_pipeline(
    f: &Function,
    passes: &[Pass],
    prefs: &LayoutPreferences,
) -> Result<Function, PassError> {
    let diagnostics = f.validate();
    if !diagnostics.is_empty() {
        return Err(PassError::Invalid(diagnostics));
    }
    let mut g = f.clone();
    for pass in passes {
        g = match pass {
            Pass::Simplify => algebraic_simplify(&g),
            Pass::Cse => eliminate_common_subexpressions(&g),
            Pass::Fold => constant_fold(&g)?,
            Pass::Layouts => assign_layouts(&g, prefs),
        };
    }
    Ok(g)
}
