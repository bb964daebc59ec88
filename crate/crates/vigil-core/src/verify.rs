//! Built-in verification suite: finite-difference gradient checks for every
//! layer and a miniature end-to-end model, brute-force equivalence checks
//! for convolution and pooling, and preprocessing goldens.
//!
//! All gradient work runs in `f64` with step 1e-3 against a 1e-4 relative
//! error budget, probing at most 32 parameters at a time.

use crate::error::Result;
use crate::gradcheck::{finite_diff_check, GradEval};
use crate::graph::{Graph, Var};
use crate::layers::{Bidirectional, Conv1d, Dense, Embedding, EmbeddingTable, GruCell, LstmCell};
use crate::model::{Model, ModelKind, ModelSpec};
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::text::normalize_text;

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-3;
const MAX_PROBE: usize = 32;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run every check. `sabotage` deliberately corrupts the analytic gradient
/// of any gradient check whose name contains the given substring, proving
/// the suite can fail.
pub fn run_all(sabotage: Option<&str>) -> Vec<CheckResult> {
    type Check = (&'static str, fn(bool) -> std::result::Result<String, String>);
    let checks: [Check; 12] = [
        ("grad_embedding", check_embedding),
        ("grad_conv1d", check_conv1d),
        ("grad_max_pool", check_max_pool),
        ("grad_dense", check_dense),
        ("grad_lstm_cell", check_lstm_cell),
        ("grad_gru_cell", check_gru_cell),
        ("grad_bidirectional", check_bidirectional),
        ("grad_softmax_cross_entropy", check_softmax_ce),
        ("grad_end_to_end", check_end_to_end),
        ("conv1d_brute_force", check_conv_oracle),
        ("max_pool_brute_force", check_pool_oracle),
        ("preprocessing_goldens", check_preprocessing),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let sab = sabotage.is_some_and(|s| name.contains(s));
            match f(sab) {
                Ok(detail) => CheckResult {
                    name,
                    passed: true,
                    detail,
                },
                Err(detail) => CheckResult {
                    name,
                    passed: false,
                    detail,
                },
            }
        })
        .collect()
}

// ── Gradient-check plumbing ─────────────────────────────────────────────

/// Layout of the flattened probe vector over a store: per parameter, the
/// starting offset inside the tensor (to skip frozen rows) and probe length.
fn probe_layout(store: &ParamStore<f64>, skip_pad_of: Option<ParamId>) -> Vec<(ParamId, usize, usize)> {
    store
        .iter()
        .map(|(id, p)| {
            let off = match skip_pad_of {
                Some(pad_id) if pad_id == id => p.value.shape()[1],
                _ => 0,
            };
            (id, off, p.value.numel() - off)
        })
        .collect()
}

/// Finite-difference check of all parameters of `store` through `fwd`,
/// which records the forward pass and returns the scalar loss.
fn probe_store<F>(
    store: &mut ParamStore<f64>,
    mut fwd: F,
    skip_pad_of: Option<ParamId>,
    sabotage: bool,
) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, &Binding) -> Result<Var>,
{
    let layout = probe_layout(store, skip_pad_of);
    let total: usize = layout.iter().map(|(_, _, len)| len).sum();
    assert!(total <= MAX_PROBE, "probe of {total} params exceeds {MAX_PROBE}");
    let mut theta0 = Vec::with_capacity(total);
    for (id, off, len) in &layout {
        theta0.extend_from_slice(&store.value(*id).data()[*off..*off + *len]);
    }
    let theta0 = Tensor::from_vec(theta0);

    finite_diff_check(
        |theta| {
            let mut pos = 0;
            for (id, off, len) in &layout {
                let mut t = store.value(*id).clone();
                t.data_mut()[*off..*off + *len].copy_from_slice(&theta.data()[pos..pos + len]);
                store.set_value(*id, t)?;
                pos += len;
            }
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, store);
            let loss = fwd(&mut g, &bind)?;
            g.backward(loss)?;
            let mut grad = Vec::with_capacity(total);
            for (id, off, len) in &layout {
                match g.grad(bind.var(*id)) {
                    Some(gr) => grad.extend_from_slice(&gr[*off..*off + *len]),
                    None => grad.extend(std::iter::repeat(0.0).take(*len)),
                }
            }
            if sabotage {
                for v in &mut grad {
                    *v *= 2.0;
                }
            }
            Ok(GradEval {
                value: g.value(loss).item(),
                grad: Tensor::from_vec(grad),
            })
        },
        &theta0,
        FD_STEP,
    )
}

fn grade(err: Result<f64>) -> std::result::Result<String, String> {
    match err {
        Ok(e) if e < GRAD_TOL => Ok(format!("max relative error {e:.3e}")),
        Ok(e) => Err(format!("max relative error {e:.3e} exceeds {GRAD_TOL:.0e}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Sum of squared entries, a smooth loss with informative gradients.
fn sum_sq(g: &mut Graph<f64>, x: Var) -> Result<Var> {
    let sq = g.mul(x, x)?;
    g.sum(sq)
}

// ── Per-layer gradient checks ───────────────────────────────────────────

fn check_embedding(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(101);
        let mut store = ParamStore::new();
        let emb = Embedding::new(
            &mut store,
            "emb",
            EmbeddingTable::<f64>::random(4, 3, true, &mut rng),
        )?;
        // Ids include PAD and a repeated row; PAD row is excluded from θ.
        let ids: Vec<u32> = vec![1, 3, 0, 3, 2, 0];
        let table = emb.table;
        probe_store(
            &mut store,
            move |g, bind| {
                let y = emb.forward(g, bind, &ids, 3)?;
                sum_sq(g, y)
            },
            Some(table),
            sabotage,
        )
    };
    grade(run())
}

fn check_conv1d(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(102);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "conv", 2, 2, 2, &mut rng)?;
        let x = Tensor::<f64>::uniform(&[2, 4, 2], -1.0, 1.0, &mut rng);
        probe_store(
            &mut store,
            move |g, bind| {
                let xv = g.leaf(x.clone());
                let y = conv.forward(g, bind, xv)?;
                sum_sq(g, y)
            },
            None,
            sabotage,
        )
    };
    grade(run())
}

fn check_max_pool(sabotage: bool) -> std::result::Result<String, String> {
    // Probe the input itself; values are spread out so ±h cannot flip an
    // argmax.
    let run = || -> Result<f64> {
        let theta0 = Tensor::from_vec(vec![
            0.9, -0.6, 0.1, 0.4, -0.2, 0.7, -0.9, 0.2, 0.5, -0.4, -0.1, 0.3,
        ]);
        finite_diff_check(
            |theta| {
                let mut g = Graph::new();
                let x = g.param(Tensor::new(vec![2, 3, 2], theta.data().to_vec())?);
                let p = g.global_max_pool(x)?;
                let loss = sum_sq(&mut g, p)?;
                g.backward(loss)?;
                let mut grad = g.grad(x).expect("param grad").to_vec();
                if sabotage {
                    for v in &mut grad {
                        *v *= 2.0;
                    }
                }
                Ok(GradEval {
                    value: g.value(loss).item(),
                    grad: Tensor::from_vec(grad),
                })
            },
            &theta0,
            FD_STEP,
        )
    };
    grade(run())
}

fn check_dense(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(103);
        let mut store = ParamStore::new();
        let dense = Dense::new(&mut store, "dense", 5, 3, &mut rng)?;
        let x = Tensor::<f64>::uniform(&[2, 5], -1.0, 1.0, &mut rng);
        probe_store(
            &mut store,
            move |g, bind| {
                let xv = g.leaf(x.clone());
                let y = dense.forward(g, bind, xv)?;
                sum_sq(g, y)
            },
            None,
            sabotage,
        )
    };
    grade(run())
}

fn check_lstm_cell(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(104);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 1, 2, &mut rng)?;
        let x = Tensor::<f64>::uniform(&[2, 1], -1.0, 1.0, &mut rng);
        let h0 = Tensor::<f64>::uniform(&[2, 2], -0.5, 0.5, &mut rng);
        let c0 = Tensor::<f64>::uniform(&[2, 2], -0.5, 0.5, &mut rng);
        probe_store(
            &mut store,
            move |g, bind| {
                let xv = g.leaf(x.clone());
                let hv = g.leaf(h0.clone());
                let cv = g.leaf(c0.clone());
                let (h, c) = cell.step(g, bind, xv, hv, cv)?;
                let both = g.concat_last(&[h, c])?;
                sum_sq(g, both)
            },
            None,
            sabotage,
        )
    };
    grade(run())
}

fn check_gru_cell(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(105);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 2, 2, &mut rng)?;
        let x = Tensor::<f64>::uniform(&[2, 2], -1.0, 1.0, &mut rng);
        let h0 = Tensor::<f64>::uniform(&[2, 2], -0.5, 0.5, &mut rng);
        probe_store(
            &mut store,
            move |g, bind| {
                let xv = g.leaf(x.clone());
                let hv = g.leaf(h0.clone());
                let h = cell.step(g, bind, xv, hv)?;
                sum_sq(g, h)
            },
            None,
            sabotage,
        )
    };
    grade(run())
}

fn check_bidirectional(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(106);
        let mut store = ParamStore::new();
        let bi = Bidirectional::lstm(&mut store, "bi", 1, 1, &mut rng)?;
        let x = Tensor::<f64>::uniform(&[1, 4, 1], -1.0, 1.0, &mut rng);
        probe_store(
            &mut store,
            move |g, bind| {
                let xv = g.leaf(x.clone());
                let y = bi.forward(g, bind, xv)?;
                sum_sq(g, y)
            },
            None,
            sabotage,
        )
    };
    grade(run())
}

fn check_softmax_ce(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(107);
        let theta0 = Tensor::<f64>::uniform(&[12], -2.0, 2.0, &mut rng);
        let labels = [0u8, 2, 1, 2];
        let weights = [0.3643, 6.6357, 9.5651];
        finite_diff_check(
            |theta| {
                let mut g = Graph::new();
                let logits = g.param(Tensor::new(vec![4, 3], theta.data().to_vec())?);
                let loss = g.softmax_cross_entropy(logits, &labels, Some(&weights))?;
                g.backward(loss)?;
                let mut grad = g.grad(logits).expect("param grad").to_vec();
                if sabotage {
                    for v in &mut grad {
                        *v *= 2.0;
                    }
                }
                Ok(GradEval {
                    value: g.value(loss).item(),
                    grad: Tensor::from_vec(grad),
                })
            },
            &theta0,
            FD_STEP,
        )
    };
    grade(run())
}

/// Miniature flagship model, every parameter tensor probed in ≤32-coordinate
/// slices through the full graph and weighted cross-entropy.
fn check_end_to_end(sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let spec = ModelSpec {
            max_len: 6,
            embed_dim: 4,
            lstm_units: 3,
            gru_units: 3,
            conv_filters: 2,
            kernel_widths: vec![3],
            ..ModelSpec::new(ModelKind::BiGruLstmCnn)
        };
        // Seed chosen so no probe sits within the FD step of a ReLU or
        // argmax kink; the observed worst error is pure truncation (~1e-7).
        let mut rng = RngState::new(120);
        let table = EmbeddingTable::<f64>::random(5, 4, true, &mut rng);
        let mut model = Model::build(spec, table, &mut rng)?;
        let ids: Vec<u32> = vec![1, 2, 3, 4, 0, 0, 2, 2, 1, 0, 0, 0];
        let labels = [0u8, 2];
        let weights = [0.5, 1.5, 2.0];

        let pids: Vec<ParamId> = model.store().iter().map(|(id, _)| id).collect();
        let embedding_pid = pids[0];
        let mut worst = 0.0f64;
        for pid in pids {
            let base = model.store().value(pid).clone();
            let offset = if pid == embedding_pid {
                base.shape()[1] // skip the frozen PAD row
            } else {
                0
            };
            let len = (base.numel() - offset).min(MAX_PROBE);
            let theta0 = Tensor::from_vec(base.data()[offset..offset + len].to_vec());
            let err = finite_diff_check(
                |theta| {
                    let mut full = base.clone();
                    full.data_mut()[offset..offset + len].copy_from_slice(theta.data());
                    model.store_mut().set_value(pid, full)?;
                    let mut g = Graph::new();
                    let bind = Binding::bind(&mut g, model.store());
                    let logits = model.forward_infer(&mut g, &bind, &ids)?;
                    let loss = g.softmax_cross_entropy(logits, &labels, Some(&weights))?;
                    g.backward(loss)?;
                    let gr = g.grad(bind.var(pid)).expect("trainable param");
                    let mut grad = gr[offset..offset + len].to_vec();
                    if sabotage {
                        for v in &mut grad {
                            *v *= 2.0;
                        }
                    }
                    Ok(GradEval {
                        value: g.value(loss).item(),
                        grad: Tensor::from_vec(grad),
                    })
                },
                &theta0,
                FD_STEP,
            )?;
            model.store_mut().set_value(pid, base)?;
            if err > worst {
                worst = err;
            }
        }
        Ok(worst)
    };
    grade(run())
}

// ── Brute-force oracles ─────────────────────────────────────────────────

/// Triple-loop reference convolution, independent of the graph kernels.
fn conv_oracle(
    x: &Tensor<f64>,
    kernels: &Tensor<f64>,
    bias: &[f64],
) -> (Vec<usize>, Vec<f64>) {
    let (b, t, ci) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (f, kw) = (kernels.shape()[0], kernels.shape()[1]);
    let to = t - kw + 1;
    let mut out = vec![0.0; b * to * f];
    for bi in 0..b {
        for o in 0..to {
            for j in 0..f {
                let mut acc = bias[j];
                for dt in 0..kw {
                    for c in 0..ci {
                        acc += x.at3(bi, o + dt, c) * kernels.at3(j, dt, c);
                    }
                }
                out[(bi * to + o) * f + j] = acc;
            }
        }
    }
    (vec![b, to, f], out)
}

fn pool_oracle(x: &Tensor<f64>) -> Vec<f64> {
    let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![f64::NEG_INFINITY; b * c];
    for bi in 0..b {
        for ti in 0..t {
            for ch in 0..c {
                let v = x.at3(bi, ti, ch);
                if v > out[bi * c + ch] {
                    out[bi * c + ch] = v;
                }
            }
        }
    }
    out
}

fn check_conv_oracle(_sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(109);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let b = 1 + rng.next_below(5);
            let c = 1 + rng.next_below(5);
            let k = 1 + rng.next_below(5);
            let t = k + rng.next_below(5 - (k - 1).min(4));
            let f = 1 + rng.next_below(5);
            let x = Tensor::<f64>::uniform(&[b, t, c], -2.0, 2.0, &mut rng);
            let kernels = Tensor::<f64>::uniform(&[f, k, c], -2.0, 2.0, &mut rng);
            let bias = Tensor::<f64>::uniform(&[f], -1.0, 1.0, &mut rng);

            let (oshape, oracle) = conv_oracle(&x, &kernels, bias.data());
            let mut g = Graph::new();
            let xv = g.leaf(x);
            let kv = g.leaf(kernels);
            let bv = g.leaf(bias);
            let y = g.conv1d(xv, kv, bv)?;
            assert_eq!(g.value(y).shape(), oshape.as_slice());
            for (a, o) in g.value(y).data().iter().zip(&oracle) {
                worst = worst.max((a - o).abs());
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) if w < 1e-6 => Ok(format!("max abs deviation {w:.3e} over 100 shapes")),
        Ok(w) => Err(format!("deviation {w:.3e} exceeds 1e-6")),
        Err(e) => Err(e.to_string()),
    }
}

fn check_pool_oracle(_sabotage: bool) -> std::result::Result<String, String> {
    let run = || -> Result<f64> {
        let mut rng = RngState::new(110);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let b = 1 + rng.next_below(5);
            let t = 1 + rng.next_below(5);
            let c = 1 + rng.next_below(5);
            let x = Tensor::<f64>::uniform(&[b, t, c], -2.0, 2.0, &mut rng);
            let oracle = pool_oracle(&x);
            let mut g = Graph::new();
            let xv = g.leaf(x);
            let y = g.global_max_pool(xv)?;
            for (a, o) in g.value(y).data().iter().zip(&oracle) {
                worst = worst.max((a - o).abs());
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) if w < 1e-6 => Ok(format!("max abs deviation {w:.3e} over 100 shapes")),
        Ok(w) => Err(format!("deviation {w:.3e} exceeds 1e-6")),
        Err(e) => Err(e.to_string()),
    }
}

// ── Preprocessing goldens ───────────────────────────────────────────────

fn check_preprocessing(_sabotage: bool) -> std::result::Result<String, String> {
    let goldens = [
        (
            "Thương tụi mày quá không biết tụi mày có thương tao ko :(",
            "thương tụi mày quá không biết tụi mày có thương tao ko",
        ),
        (
            "Thi đấu thể thao chuyên nghiệp ở trong nước bạc bẽo vl",
            "thi đấu thể thao chuyên nghiệp ở trong nước bạc bẽo vl",
        ),
        (
            "Không ai rãnh mà nói chuyện với mày đâu thằng ngũ",
            "không ai rãnh mà nói chuyện với mày đâu thằng ngũ",
        ),
        ("Có  3   con!!!", "có number con"),
        ("SAO   dám nói 123 lần?!", "sao dám nói number lần"),
        ("", ""),
    ];
    for (raw, want) in goldens {
        let got = normalize_text(raw);
        if got != want {
            return Err(format!("normalize({raw:?}) = {got:?}, expected {want:?}"));
        }
        let twice = normalize_text(&got);
        if twice != got {
            return Err(format!("not idempotent on {raw:?}"));
        }
    }
    // Idempotence over generated strings.
    let mut rng = RngState::new(111);
    for i in 0..200 {
        let s = random_string(&mut rng);
        let once = normalize_text(&s);
        let twice = normalize_text(&once);
        if once != twice {
            return Err(format!("idempotence broken on sample {i}: {s:?}"));
        }
    }
    Ok(format!("{} goldens plus 200 idempotence samples", goldens.len()))
}

/// Random text mixing ASCII, Vietnamese letters, digits, punctuation and a
/// few symbols.
pub fn random_string(rng: &mut RngState) -> String {
    let pool: Vec<char> = "aàáâãeèéêoòóôõuùúưiìíyýđ ĐABC xyz0123456789.,!?:;\"'()-_@#%&*  \t\nạảấầẩẫậắằẳẵặẹẻẽếềểễệỉịọỏốồổỗộớờởỡợụủứừửữựỳỵỷỹ😀🔥"
        .chars()
        .collect();
    let len = rng.next_below(60);
    (0..len).map(|_| pool[rng.next_below(pool.len())]).collect()
}
