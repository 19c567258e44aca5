use crate::error::Result;
use crate::numerics::{Tape, Unary, Var};

/// Multi-scale causal convolution bank bound to a tape.
#[derive(Clone, Debug)]
pub struct MsTcnVars {
    /// One `(kernel [w, c_in, c_b], bias [c_b])` pair per width.
    pub branches: Vec<(Var, Var)>,
    /// Width-1 projection `[1, n_branches * c_b, C]` and bias `[C]`.
    pub projection: (Var, Var),
    pub activation: Unary,
}

/// Runs every causal branch over `x` (`[L, F]`), concatenates channels,
/// activates and projects to `[L, C]`.
pub fn ms_tcn_forward(tape: &mut Tape, x: Var, p: &MsTcnVars) -> Result<Var> {
    let outs = p
        .branches
        .iter()
        .map(|&(k, b)| tape.conv1d_causal(x, k, b))
        .collect::<Result<Vec<_>>>()?;
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let act = tape.unary(cat, p.activation)?;
    tape.conv1d_causal(act, p.projection.0, p.projection.1)
}
