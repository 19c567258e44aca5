use crate::error::Result;
use crate::numerics::{Tape, Unary, Var};

/// Dynamic gating cell weights bound to a tape.
///
/// `w_*` map inputs (`[F', D]`), `u_*` map the previous state (`[D, D]`),
/// `b_*` are `[D]` biases for the gate (`g`), candidate (`c`) and output
/// gate (`o`).
#[derive(Clone, Copy, Debug)]
pub struct CellVars {
    pub w_g: Var,
    pub u_g: Var,
    pub b_g: Var,
    pub w_c: Var,
    pub u_c: Var,
    pub b_c: Var,
    pub w_o: Var,
    pub u_o: Var,
    pub b_o: Var,
    pub phi: Unary,
}

/// Per-step outputs.
#[derive(Clone, Copy, Debug)]
pub struct CellStep {
    pub h: Var,
    pub c: Var,
    pub g: Var,
    pub o: Var,
}

/// Input projections `x W + b` precomputed for a whole sequence.
#[derive(Clone, Copy, Debug)]
pub struct CellInputs {
    pub g: Var,
    pub c: Var,
    pub o: Var,
}

impl CellVars {
    /// Projects every row of `x` (`[T, F']`) through the three input maps.
    pub fn project_inputs(&self, tape: &mut Tape, x: Var) -> Result<CellInputs> {
        let mut proj = |w: Var, b: Var| -> Result<Var> {
            let m = tape.matmul(x, w)?;
            tape.add_bias(m, b)
        };
        Ok(CellInputs {
            g: proj(self.w_g, self.b_g)?,
            c: proj(self.w_c, self.b_c)?,
            o: proj(self.w_o, self.b_o)?,
        })
    }

    /// One step from projected inputs at row `t`; `h_prev = None` is the
    /// zero initial state.
    pub fn step_projected(&self, tape: &mut Tape, inputs: &CellInputs, t: usize, h_prev: Option<Var>) -> Result<CellStep> {
        let mut pre = |proj: Var, u: Var| -> Result<Var> {
            let x = tape.slice_rows(proj, t, 1)?;
            match h_prev {
                Some(h) => {
                    let r = tape.matmul(h, u)?;
                    tape.add(x, r)
                }
                None => Ok(x),
            }
        };
        let g_pre = pre(inputs.g, self.u_g)?;
        let c_pre = pre(inputs.c, self.u_c)?;
        let o_pre = pre(inputs.o, self.u_o)?;
        let g = tape.sigmoid(g_pre);
        let cand = tape.tanh(c_pre);
        let gated = tape.mul(g, cand)?;
        let c = tape.unary(gated, self.phi)?;
        let o = tape.sigmoid(o_pre);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(CellStep { h, c, g, o })
    }
}

/// One cell update for a single input row `x_t` (`[1, F']`) and state
/// `h_prev` (`[1, D]`).
pub fn cell_step(tape: &mut Tape, x_t: Var, h_prev: Var, cell: &CellVars) -> Result<CellStep> {
    let inputs = cell.project_inputs(tape, x_t)?;
    cell.step_projected(tape, &inputs, 0, Some(h_prev))
}
