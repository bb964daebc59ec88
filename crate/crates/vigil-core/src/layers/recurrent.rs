//! LSTM and GRU cells, sequence unrolling, and the bidirectional wrapper.
//!
//! Gate activations are sigmoid; hidden-state activations are tanh. The GRU
//! uses the convention `h_t = (1-z) ⊙ h_prev + z ⊙ h̃`, so a saturated-low
//! update gate copies the previous state through.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::init;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One gate: input kernel `W [in, h]`, recurrent kernel `U [h, h]`,
/// bias `b [h]`.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl GateParams {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        bias_init: f64,
        rng: &mut RngState,
    ) -> Result<GateParams> {
        let w = store.add(
            format!("{name}.w"),
            init::glorot_uniform(&[in_dim, hidden], in_dim, hidden, rng),
            true,
        )?;
        let u = store.add(format!("{name}.u"), init::recurrent_kernel(hidden, rng), true)?;
        let b = store.add(
            format!("{name}.b"),
            Tensor::full(&[hidden], T::from_f64(bias_init)),
            true,
        )?;
        Ok(GateParams { w, u, b })
    }

    /// x·W + h·U + b
    fn pre<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var, h: Var) -> Result<Var> {
        let xw = g.matmul(x, bind.var(self.w))?;
        let hu = g.matmul(h, bind.var(self.u))?;
        let s = g.add(xw, hu)?;
        g.add_bias(s, bind.var(self.b))
    }
}

/// Long short-term memory cell: input, forget, cell and output gates.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input: GateParams,
    pub forget: GateParams,
    pub cell: GateParams,
    pub output: GateParams,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<LstmCell> {
        Ok(LstmCell {
            input: GateParams::new(store, &format!("{name}.input"), in_dim, hidden, 0.0, rng)?,
            // Forget bias starts at 1.0 so early training retains memory.
            forget: GateParams::new(store, &format!("{name}.forget"), in_dim, hidden, 1.0, rng)?,
            cell: GateParams::new(store, &format!("{name}.cell"), in_dim, hidden, 0.0, rng)?,
            output: GateParams::new(store, &format!("{name}.output"), in_dim, hidden, 0.0, rng)?,
            in_dim,
            hidden,
        })
    }

    /// Parameters per direction: 4·(in·h + h² + h).
    pub fn param_count(in_dim: usize, hidden: usize) -> usize {
        4 * (in_dim * hidden + hidden * hidden + hidden)
    }

    /// One step: returns `(h_t, c_t)`.
    ///
    /// i,f,o = σ(x·W + h·U + b); g = tanh(x·W + h·U + b);
    /// c_t = f ⊙ c_prev + i ⊙ g; h_t = o ⊙ tanh(c_t).
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        x_t: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let i_pre = self.input.pre(g, bind, x_t, h_prev)?;
        let i = g.sigmoid(i_pre)?;
        let f_pre = self.forget.pre(g, bind, x_t, h_prev)?;
        let f = g.sigmoid(f_pre)?;
        let c_pre = self.cell.pre(g, bind, x_t, h_prev)?;
        let c_cand = g.tanh(c_pre)?;
        let o_pre = self.output.pre(g, bind, x_t, h_prev)?;
        let o = g.sigmoid(o_pre)?;

        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, c_cand)?;
        let c_t = g.add(keep, write)?;
        let c_act = g.tanh(c_t)?;
        let h_t = g.mul(o, c_act)?;
        Ok((h_t, c_t))
    }
}

/// Gated recurrent unit: update and reset gates, no output gate.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub update: GateParams,
    pub reset: GateParams,
    pub candidate: GateParams,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<GruCell> {
        Ok(GruCell {
            update: GateParams::new(store, &format!("{name}.update"), in_dim, hidden, 0.0, rng)?,
            reset: GateParams::new(store, &format!("{name}.reset"), in_dim, hidden, 0.0, rng)?,
            candidate: GateParams::new(
                store,
                &format!("{name}.candidate"),
                in_dim,
                hidden,
                0.0,
                rng,
            )?,
            in_dim,
            hidden,
        })
    }

    /// Parameters per direction: 3·(in·h + h² + h).
    pub fn param_count(in_dim: usize, hidden: usize) -> usize {
        3 * (in_dim * hidden + hidden * hidden + hidden)
    }

    /// One step: z,r = σ(x·W + h·U + b); h̃ = tanh(x·W + (r⊙h)·U + b);
    /// h_t = (1-z) ⊙ h_prev + z ⊙ h̃.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        x_t: Var,
        h_prev: Var,
    ) -> Result<Var> {
        let z_pre = self.update.pre(g, bind, x_t, h_prev)?;
        let z = g.sigmoid(z_pre)?;
        let r_pre = self.reset.pre(g, bind, x_t, h_prev)?;
        let r = g.sigmoid(r_pre)?;

        let gated = g.mul(r, h_prev)?;
        let cand_pre = self.candidate.pre(g, bind, x_t, gated)?;
        let cand = g.tanh(cand_pre)?;

        let hold = g.one_minus(z)?;
        let carry = g.mul(hold, h_prev)?;
        let update = g.mul(z, cand)?;
        g.add(carry, update)
    }
}

/// A recurrent cell of either flavor, drivable over a sequence.
#[derive(Debug, Clone)]
pub enum RnnCell {
    Lstm(LstmCell),
    Gru(GruCell),
}

impl RnnCell {
    pub fn hidden(&self) -> usize {
        match self {
            RnnCell::Lstm(c) => c.hidden,
            RnnCell::Gru(c) => c.hidden,
        }
    }

    /// Unroll over `[batch, time, in]` from zero initial state.
    ///
    /// Returns one `[batch, hidden]` state per timestep, indexed by time
    /// regardless of scan direction: when `reverse`, entry `t` is the state
    /// after consuming timesteps `T-1 ..= t`.
    pub fn forward_seq<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        x: Var,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let shape = g.value(x).shape().to_vec();
        let (b, t) = (shape[0], shape[1]);
        let zero = g.leaf(Tensor::zeros(&[b, self.hidden()]));
        let mut h = zero;
        let mut c = zero;
        let mut out: Vec<Option<Var>> = vec![None; t];
        let order: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        for ti in order {
            let x_t = g.time_slice(x, ti)?;
            h = match self {
                RnnCell::Lstm(cell) => {
                    let (h_t, c_t) = cell.step(g, bind, x_t, h, c)?;
                    c = c_t;
                    h_t
                }
                RnnCell::Gru(cell) => cell.step(g, bind, x_t, h)?,
            };
            out[ti] = Some(h);
        }
        Ok(out.into_iter().map(|v| v.expect("all steps visited")).collect())
    }
}

/// Two independent cells scanning opposite directions, features concatenated
/// per timestep.
#[derive(Debug, Clone)]
pub struct Bidirectional {
    pub fwd: RnnCell,
    pub bwd: RnnCell,
}

impl Bidirectional {
    pub fn lstm<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<Bidirectional> {
        Ok(Bidirectional {
            fwd: RnnCell::Lstm(LstmCell::new(store, &format!("{name}.fwd"), in_dim, hidden, rng)?),
            bwd: RnnCell::Lstm(LstmCell::new(store, &format!("{name}.bwd"), in_dim, hidden, rng)?),
        })
    }

    pub fn gru<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<Bidirectional> {
        Ok(Bidirectional {
            fwd: RnnCell::Gru(GruCell::new(store, &format!("{name}.fwd"), in_dim, hidden, rng)?),
            bwd: RnnCell::Gru(GruCell::new(store, &format!("{name}.bwd"), in_dim, hidden, rng)?),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.fwd.hidden() + self.bwd.hidden()
    }

    /// `[batch, time, in]` → `[batch, time, fwd_h + bwd_h]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        let f = self.fwd.forward_seq(g, bind, x, false)?;
        let b = self.bwd.forward_seq(g, bind, x, true)?;
        let merged: Vec<Var> = f
            .iter()
            .zip(&b)
            .map(|(&ft, &bt)| g.concat_last(&[ft, bt]))
            .collect::<Result<_>>()?;
        g.stack_time(&merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed<T: Scalar>(store: &mut ParamStore<T>, gate: &GateParams) {
        let w = store.value(gate.w).shape().to_vec();
        let u = store.value(gate.u).shape().to_vec();
        let b = store.value(gate.b).shape().to_vec();
        store.set_value(gate.w, Tensor::zeros(&w)).unwrap();
        store.set_value(gate.u, Tensor::zeros(&u)).unwrap();
        store.set_value(gate.b, Tensor::zeros(&b)).unwrap();
    }

    fn filled<T: Scalar>(store: &mut ParamStore<T>, gate: &GateParams, w: f64, u: f64, b: f64) {
        let ws = store.value(gate.w).shape().to_vec();
        let us = store.value(gate.u).shape().to_vec();
        let bs = store.value(gate.b).shape().to_vec();
        store.set_value(gate.w, Tensor::full(&ws, T::from_f64(w))).unwrap();
        store.set_value(gate.u, Tensor::full(&us, T::from_f64(u))).unwrap();
        store.set_value(gate.b, Tensor::full(&bs, T::from_f64(b))).unwrap();
    }

    #[test]
    fn lstm_all_zero_params_give_zero_state() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(1);
        let cell = LstmCell::new(&mut store, "lstm", 2, 3, &mut rng).unwrap();
        for gate in [&cell.input, &cell.forget, &cell.cell, &cell.output] {
            zeroed(&mut store, gate);
        }
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 2], 0.3));
        let h0 = g.leaf(Tensor::zeros(&[1, 3]));
        let c0 = g.leaf(Tensor::zeros(&[1, 3]));
        let (h, c) = cell.step(&mut g, &bind, x, h0, c0).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_saturated_gates_hold_memory() {
        // forget bias +100, input bias −100 → c_t ≈ c_prev
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(2);
        let cell = LstmCell::new(&mut store, "lstm", 1, 2, &mut rng).unwrap();
        for gate in [&cell.input, &cell.forget, &cell.cell, &cell.output] {
            zeroed(&mut store, gate);
        }
        filled::<f64>(&mut store, &cell.forget, 0.0, 0.0, 100.0);
        filled::<f64>(&mut store, &cell.input, 0.0, 0.0, -100.0);

        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 1], 0.9));
        let h0 = g.leaf(Tensor::zeros(&[1, 2]));
        let c0 = g.leaf(Tensor::from_rows(&[&[0.4, -0.7]]));
        let (_, c) = cell.step(&mut g, &bind, x, h0, c0).unwrap();
        for (got, want) in g.value(c).data().iter().zip(&[0.4, -0.7]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn lstm_scalar_hand_computation() {
        // in=h=1, all kernels 1, biases 0, x=1, h0=c0=0:
        // i=f=o=σ(1), g=tanh(1), c=i·g=0.5567699411, h=o·tanh(c)=0.3696063529
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(3);
        let cell = LstmCell::new(&mut store, "lstm", 1, 1, &mut rng).unwrap();
        for gate in [&cell.input, &cell.forget, &cell.cell, &cell.output] {
            filled::<f64>(&mut store, gate, 1.0, 1.0, 0.0);
        }
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 1], 1.0));
        let h0 = g.leaf(Tensor::zeros(&[1, 1]));
        let c0 = g.leaf(Tensor::zeros(&[1, 1]));
        let (h, c) = cell.step(&mut g, &bind, x, h0, c0).unwrap();
        assert!((g.value(c).data()[0] - 0.5567699411459397).abs() < 1e-12);
        assert!((g.value(h).data()[0] - 0.3696063529357058).abs() < 1e-12);
    }

    #[test]
    fn gru_all_zero_params_give_zero_state() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(4);
        let cell = GruCell::new(&mut store, "gru", 2, 2, &mut rng).unwrap();
        for gate in [&cell.update, &cell.reset, &cell.candidate] {
            zeroed(&mut store, gate);
        }
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 2], 0.5));
        let h0 = g.leaf(Tensor::zeros(&[1, 2]));
        let h = cell.step(&mut g, &bind, x, h0).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_low_update_gate_copies_state_through() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(5);
        let cell = GruCell::new(&mut store, "gru", 1, 2, &mut rng).unwrap();
        filled::<f64>(&mut store, &cell.update, 0.0, 0.0, -100.0);

        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 1], 0.8));
        let h0 = g.leaf(Tensor::from_rows(&[&[0.25, -0.5]]));
        let h = cell.step(&mut g, &bind, x, h0).unwrap();
        for (got, want) in g.value(h).data().iter().zip(&[0.25, -0.5]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn gru_high_update_gate_takes_candidate() {
        // z ≈ 1, h_prev = 0 → h_t ≈ tanh(x·W_c + b_c)
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(6);
        let cell = GruCell::new(&mut store, "gru", 1, 1, &mut rng).unwrap();
        filled::<f64>(&mut store, &cell.update, 0.0, 0.0, 100.0);
        filled::<f64>(&mut store, &cell.candidate, 0.7, 0.3, 0.1);

        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::full(&[1, 1], 2.0));
        let h0 = g.leaf(Tensor::zeros(&[1, 1]));
        let h = cell.step(&mut g, &bind, x, h0).unwrap();
        let want = (2.0f64 * 0.7 + 0.1).tanh();
        assert!((g.value(h).data()[0] - want).abs() < 1e-9);
    }

    #[test]
    fn unrolling_matches_manual_stepping() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(7);
        let cell = LstmCell::new(&mut store, "lstm", 2, 3, &mut rng).unwrap();
        let x_data = Tensor::uniform(&[2, 4, 2], -1.0, 1.0, &mut rng);

        let mut g1 = Graph::new();
        let bind1 = Binding::bind(&mut g1, &store);
        let x1 = g1.leaf(x_data.clone());
        let seq = RnnCell::Lstm(cell.clone())
            .forward_seq(&mut g1, &bind1, x1, false)
            .unwrap();

        let mut g2 = Graph::new();
        let bind2 = Binding::bind(&mut g2, &store);
        let x2 = g2.leaf(x_data);
        let mut h = g2.leaf(Tensor::zeros(&[2, 3]));
        let mut c = g2.leaf(Tensor::zeros(&[2, 3]));
        for t in 0..4 {
            let x_t = g2.time_slice(x2, t).unwrap();
            let (h_t, c_t) = cell.step(&mut g2, &bind2, x_t, h, c).unwrap();
            h = h_t;
            c = c_t;
            assert_eq!(g1.value(seq[t]).data(), g2.value(h).data());
        }
    }

    #[test]
    fn bidirectional_single_timestep_concatenates_both_cells() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(8);
        let bi = Bidirectional::gru(&mut store, "bi", 2, 3, &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::uniform(&[1, 1, 2], -1.0, 1.0, &mut rng));
        let y = bi.forward(&mut g, &bind, x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 6]);

        // Each half equals that cell applied to the single input.
        let x_t = g.time_slice(x, 0).unwrap();
        let h0 = g.leaf(Tensor::zeros(&[1, 3]));
        let (RnnCell::Gru(f), RnnCell::Gru(b)) = (&bi.fwd, &bi.bwd) else {
            unreachable!()
        };
        let hf = f.step(&mut g, &bind, x_t, h0).unwrap();
        let hb = b.step(&mut g, &bind, x_t, h0).unwrap();
        assert_eq!(&g.value(y).data()[0..3], g.value(hf).data());
        assert_eq!(&g.value(y).data()[3..6], g.value(hb).data());
    }

    #[test]
    fn palindrome_with_tied_weights_mirrors_features() {
        // With backward params := forward params and a palindromic input,
        // the backward half at t equals the forward half at T-1-t.
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(9);
        let fwd = GruCell::new(&mut store, "fwd", 1, 2, &mut rng).unwrap();
        let bi = Bidirectional {
            fwd: RnnCell::Gru(fwd.clone()),
            bwd: RnnCell::Gru(fwd),
        };
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::new(vec![1, 5, 1], vec![0.1, -0.4, 0.9, -0.4, 0.1]).unwrap());
        let y = bi.forward(&mut g, &bind, x).unwrap();
        let t = 5;
        let h = 2;
        for ti in 0..t {
            for ch in 0..h {
                let bwd = g.value(y).at3(0, ti, h + ch);
                let fwd = g.value(y).at3(0, t - 1 - ti, ch);
                assert!((bwd - fwd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paper_scale_channel_count() {
        // 112 units per direction → 224 output channels
        let mut store = ParamStore::<f32>::new();
        let mut rng = RngState::new(10);
        let bi = Bidirectional::lstm(&mut store, "bi", 4, 112, &mut rng).unwrap();
        assert_eq!(bi.out_channels(), 224);
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &store);
        let x = g.leaf(Tensor::uniform(&[1, 2, 4], -1.0, 1.0, &mut rng));
        let y = bi.forward(&mut g, &bind, x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 224]);
    }

    #[test]
    fn parameter_count_closed_forms() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = RngState::new(11);
        LstmCell::new(&mut store, "lstm", 300, 112, &mut rng).unwrap();
        let total: usize = store.iter().map(|(_, p)| p.value.numel()).sum();
        assert_eq!(total, LstmCell::param_count(300, 112));
        assert_eq!(2 * total, 370_048);
        assert_eq!(2 * GruCell::param_count(300, 112), 277_536);
    }
}
