//! Loss functions, manual backpropagation through time, the local backward
//! pass of the optimum-output cell, optimizers, and gradient checking.
//!
//! Gradients follow the standard chain rule anchored to ∂L/∂ŷ = ŷ − y with
//! the temporal loss ½(ŷ − y)²; central finite differences are the arbiter
//! throughout.

use crate::cells::{CellState, Component, GruState, GruWeights, LstmWeights};
use crate::error::{Error, Result};
use crate::numerics::{glorot_init, Mat2, Rng, Vec1};
use serde::{Deserialize, Serialize};

/// One linear layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Mat2,
    pub b: Vec1,
}

/// Linear dense head mapping the recurrent output to the scalar prediction,
/// e.g. U → 4 → 1. All activations are linear; the last layer has one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub layers: Vec<DenseLayer>,
}

impl HeadWeights {
    pub fn zeros(input: usize, sizes: &[usize]) -> Self {
        Self::build(input, sizes, Mat2::zeros)
    }

    pub fn glorot(input: usize, sizes: &[usize], rng: &mut Rng) -> Self {
        Self::build(input, sizes, |rows, cols| glorot_init(rows, cols, rng))
    }

    fn build(input: usize, sizes: &[usize], mut init: impl FnMut(usize, usize) -> Mat2) -> Self {
        assert!(!sizes.is_empty(), "head needs at least one layer");
        assert_eq!(*sizes.last().unwrap(), 1, "head must end in a single unit");
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input;
        for &size in sizes {
            layers.push(DenseLayer {
                w: init(size, fan_in),
                b: Vec1::zeros(size),
            });
            fan_in = size;
        }
        Self { layers }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].w.cols()
    }

    /// Scalar prediction for one recurrent output.
    pub fn forward(&self, h: &Vec1) -> f64 {
        self.forward_cached(h).0
    }

    /// Forward pass keeping every layer activation for the backward pass.
    /// The returned vector holds `[input, layer₁ output, …, final output]`.
    pub fn forward_cached(&self, h: &Vec1) -> (f64, Vec<Vec1>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(h.clone());
        for layer in &self.layers {
            let next = layer.w.matvec(acts.last().unwrap()).add(&layer.b);
            acts.push(next);
        }
        (acts.last().unwrap()[0], acts)
    }

    /// Backward pass from the scalar residual `dy = ŷ − y`. Accumulates the
    /// layer gradients into `grads` and returns ∂L/∂h.
    pub fn backward(&self, acts: &[Vec1], dy: f64, grads: &mut HeadWeights) -> Vec1 {
        let mut delta = Vec1::from_slice(&[dy]);
        for (k, layer) in self.layers.iter().enumerate().rev() {
            grads.layers[k].w.add_outer(&delta, &acts[k]);
            grads.layers[k].b = grads.layers[k].b.add(&delta);
            delta = layer.w.matvec_t(&delta);
        }
        delta
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(2 * self.layers.len());
        for k in 0..self.layers.len() {
            names.push(format!("head.{k}.w"));
            names.push(format!("head.{k}.b"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice(), l.b.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }
}

/// Shape-matched gradients for an LSTM cell plus its dense head.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub cell: LstmWeights,
    pub head: HeadWeights,
}

impl Gradients {
    pub fn zeros_like(w: &LstmWeights, head: &HeadWeights) -> Self {
        Self {
            cell: LstmWeights::zeros(w.units(), w.inputs()),
            head: zero_head_like(head),
        }
    }

    fn ensure_finite(&self) -> Result<()> {
        for (name, tensor) in LstmWeights::TENSOR_NAMES.iter().zip(self.cell.tensors()) {
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        for (name, tensor) in self.head.tensor_names().iter().zip(self.head.tensors()) {
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        Ok(())
    }
}

/// Gradients for a GRU cell plus its dense head.
#[derive(Clone, Debug, PartialEq)]
pub struct GruGradients {
    pub cell: GruWeights,
    pub head: HeadWeights,
}

fn zero_head_like(head: &HeadWeights) -> HeadWeights {
    HeadWeights {
        layers: head
            .layers
            .iter()
            .map(|l| DenseLayer {
                w: Mat2::zeros(l.w.rows(), l.w.cols()),
                b: Vec1::zeros(l.b.len()),
            })
            .collect(),
    }
}

/// Reporting MSE: the plain mean of squared errors.
pub fn mse(y: &[f64], y_hat: &[f64]) -> f64 {
    assert!(!y.is_empty(), "mse: empty input");
    assert_eq!(
        y.len(),
        y_hat.len(),
        "mse: length mismatch ({} vs {})",
        y.len(),
        y_hat.len()
    );
    y.iter()
        .zip(y_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

/// Temporal loss used for gradients: Σₜ ½(yₜ − ŷₜ)², summed over the
/// look-back period.
pub fn mse_temporal(y: &[f64], y_hat: &[f64]) -> f64 {
    assert!(!y.is_empty(), "mse_temporal: empty input");
    assert_eq!(
        y.len(),
        y_hat.len(),
        "mse_temporal: length mismatch ({} vs {})",
        y.len(),
        y_hat.len()
    );
    y.iter()
        .zip(y_hat.iter())
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum()
}

/// Analytic gradients of the temporal loss over a trajectory of LSTM steps,
/// one label per step. Residuals propagate through the head into the gates
/// and backward through time via both the hidden and the cell-state paths.
pub fn bptt_grads(
    w: &LstmWeights,
    head: &HeadWeights,
    trajectory: &[CellState],
    labels: &[f64],
) -> Result<Gradients> {
    assert!(!trajectory.is_empty(), "bptt_grads: empty trajectory");
    assert_eq!(
        trajectory.len(),
        labels.len(),
        "bptt_grads: trajectory/label length mismatch ({} vs {})",
        trajectory.len(),
        labels.len()
    );

    let units = w.units();
    let mut grads = Gradients::zeros_like(w, head);
    let mut dh_carry = Vec1::zeros(units);
    let mut dc_carry = Vec1::zeros(units);

    for (state, &label) in trajectory.iter().zip(labels.iter()).rev() {
        let (y_hat, acts) = head.forward_cached(&state.h);
        let dh_head = head.backward(&acts, y_hat - label, &mut grads.head);
        let dh = dh_head.add(&dh_carry);

        let tanh_c = state.c.map(f64::tanh);
        let d_o = dh.hadamard(&tanh_c);
        let dc = dh
            .hadamard(&state.o)
            .hadamard(&tanh_c.map(|v| 1.0 - v * v))
            .add(&dc_carry);
        let d_f = dc.hadamard(&state.c_prev);
        let d_i = dc.hadamard(&state.g);
        let d_g = dc.hadamard(&state.i);

        let da_f = d_f.hadamard(&state.f.map(|v| v * (1.0 - v)));
        let da_i = d_i.hadamard(&state.i.map(|v| v * (1.0 - v)));
        let da_g = d_g.hadamard(&state.g.map(|v| 1.0 - v * v));
        let da_o = d_o.hadamard(&state.o.map(|v| v * (1.0 - v)));

        accumulate_gate_grads(&mut grads.cell, state, &da_f, &da_i, &da_g, &da_o);

        dh_carry = w
            .u_f
            .matvec_t(&da_f)
            .add(&w.u_i.matvec_t(&da_i))
            .add(&w.u_g.matvec_t(&da_g))
            .add(&w.u_o.matvec_t(&da_o));
        dc_carry = dc.hadamard(&state.f);
    }

    grads.ensure_finite()?;
    Ok(grads)
}

fn accumulate_gate_grads(
    grads: &mut LstmWeights,
    state: &CellState,
    da_f: &Vec1,
    da_i: &Vec1,
    da_g: &Vec1,
    da_o: &Vec1,
) {
    grads.w_f.add_outer(da_f, &state.x);
    grads.w_i.add_outer(da_i, &state.x);
    grads.w_g.add_outer(da_g, &state.x);
    grads.w_o.add_outer(da_o, &state.x);
    grads.u_f.add_outer(da_f, &state.h_prev);
    grads.u_i.add_outer(da_i, &state.h_prev);
    grads.u_g.add_outer(da_g, &state.h_prev);
    grads.u_o.add_outer(da_o, &state.h_prev);
    grads.b_f = grads.b_f.add(da_f);
    grads.b_i = grads.b_i.add(da_i);
    grads.b_g = grads.b_g.add(da_g);
    grads.b_o = grads.b_o.add(da_o);
}

/// Local gradients of the optimum-output cell for one event. The loss flows
/// through the head into the selected component's own generating expression
/// only; previous events, θ, and the selection itself are constants to the
/// backward pass (stop-gradient at the repository).
pub fn optm_local_grads(
    selected: Component,
    state: &CellState,
    w: &LstmWeights,
    head: &HeadWeights,
    label: f64,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(w, head);
    let h_new = selected.extract(state);
    let (y_hat, acts) = head.forward_cached(h_new);
    let d_sel = head.backward(&acts, y_hat - label, &mut grads.head);

    let units = w.units();
    let zero = Vec1::zeros(units);
    let (mut d_f, mut d_i, mut d_g, mut d_o) = (zero.clone(), zero.clone(), zero.clone(), zero);
    let spread_cell = |dc: &Vec1, d_f: &mut Vec1, d_i: &mut Vec1, d_g: &mut Vec1| {
        *d_f = dc.hadamard(&state.c_prev);
        *d_i = dc.hadamard(&state.g);
        *d_g = dc.hadamard(&state.i);
    };
    match selected {
        Component::Forget => d_f = d_sel,
        Component::Input => d_i = d_sel,
        Component::Candidate => d_g = d_sel,
        Component::Output => d_o = d_sel,
        Component::Cell => spread_cell(&d_sel, &mut d_f, &mut d_i, &mut d_g),
        Component::Hidden => {
            let tanh_c = state.c.map(f64::tanh);
            d_o = d_sel.hadamard(&tanh_c);
            let dc = d_sel
                .hadamard(&state.o)
                .hadamard(&tanh_c.map(|v| 1.0 - v * v));
            spread_cell(&dc, &mut d_f, &mut d_i, &mut d_g);
        }
    }

    let da_f = d_f.hadamard(&state.f.map(|v| v * (1.0 - v)));
    let da_i = d_i.hadamard(&state.i.map(|v| v * (1.0 - v)));
    let da_g = d_g.hadamard(&state.g.map(|v| 1.0 - v * v));
    let da_o = d_o.hadamard(&state.o.map(|v| v * (1.0 - v)));
    accumulate_gate_grads(&mut grads.cell, state, &da_f, &da_i, &da_g, &da_o);

    grads.ensure_finite()?;
    Ok(grads)
}

/// Backpropagation through time for the GRU baseline, one label per step.
pub fn gru_bptt_grads(
    w: &GruWeights,
    head: &HeadWeights,
    trajectory: &[GruState],
    labels: &[f64],
) -> Result<GruGradients> {
    assert!(!trajectory.is_empty(), "gru_bptt_grads: empty trajectory");
    assert_eq!(
        trajectory.len(),
        labels.len(),
        "gru_bptt_grads: trajectory/label length mismatch ({} vs {})",
        trajectory.len(),
        labels.len()
    );

    let units = w.units();
    let mut grads = GruGradients {
        cell: GruWeights::zeros(units, trajectory[0].x.len()),
        head: zero_head_like(head),
    };
    let mut dh_carry = Vec1::zeros(units);

    for (state, &label) in trajectory.iter().zip(labels.iter()).rev() {
        let (y_hat, acts) = head.forward_cached(&state.h);
        let dh_head = head.backward(&acts, y_hat - label, &mut grads.head);
        let dh = dh_head.add(&dh_carry);

        let dz = dh.hadamard(&state.h_prev.sub(&state.n));
        let dn = dh.hadamard(&state.z.map(|v| 1.0 - v));
        let da_z = dz.hadamard(&state.z.map(|v| v * (1.0 - v)));
        let da_n = dn.hadamard(&state.n.map(|v| 1.0 - v * v));
        let dn_gate = w.u_n.matvec_t(&da_n);
        let dr = dn_gate.hadamard(&state.h_prev);
        let da_r = dr.hadamard(&state.r.map(|v| v * (1.0 - v)));

        grads.cell.w_z.add_outer(&da_z, &state.x);
        grads.cell.w_r.add_outer(&da_r, &state.x);
        grads.cell.w_n.add_outer(&da_n, &state.x);
        grads.cell.u_z.add_outer(&da_z, &state.h_prev);
        grads.cell.u_r.add_outer(&da_r, &state.h_prev);
        grads
            .cell
            .u_n
            .add_outer(&da_n, &state.r.hadamard(&state.h_prev));
        grads.cell.b_z = grads.cell.b_z.add(&da_z);
        grads.cell.b_r = grads.cell.b_r.add(&da_r);
        grads.cell.b_n = grads.cell.b_n.add(&da_n);

        dh_carry = dh
            .hadamard(&state.z)
            .add(&w.u_z.matvec_t(&da_z))
            .add(&w.u_r.matvec_t(&da_r))
            .add(&dn_gate.hadamard(&state.r));
    }

    for (name, tensor) in GruWeights::TENSOR_NAMES.iter().zip(grads.cell.tensors()) {
        if tensor.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {name}")));
        }
    }
    Ok(grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptKind::Sgd),
            "adam" => Ok(OptKind::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

/// SGD or Adam with bias correction (β₁=0.9, β₂=0.999, ε=1e−8). Moments are
/// allocated lazily on the first step, shaped like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptKind,
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every parameter tensor. `params` and `grads`
    /// must be the same tensors in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(
            params.len(),
            grads.len(),
            "optimizer step: tensor count mismatch ({} vs {})",
            params.len(),
            grads.len()
        );
        if self.m.is_empty() && self.kind == OptKind::Adam {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.step_count += 1;
        match self.kind {
            OptKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    for (pj, gj) in p.iter_mut().zip(g.iter()) {
                        *pj -= self.learning_rate * gj;
                    }
                }
            }
            OptKind::Adam => {
                let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
                let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    assert_eq!(p.len(), g.len(), "optimizer step: tensor length mismatch");
                    for j in 0..p.len() {
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                        v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}

/// Global L2 norm across a set of tensors.
pub fn global_norm(tensors: &[&[f64]]) -> f64 {
    tensors
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Max-norm gradient clipping: when the global norm exceeds `max_norm`,
/// every tensor is scaled by `max_norm / norm`. Off by default in the
/// models; opt in for deep or unstable streams.
pub fn clip_max_norm(tensors: &mut [&mut [f64]], max_norm: f64) {
    assert!(max_norm > 0.0, "clip_max_norm: max_norm must be positive");
    let norm = {
        let views: Vec<&[f64]> = tensors.iter().map(|t| &**t).collect();
        global_norm(&views)
    };
    if norm > max_norm {
        let scale = max_norm / norm;
        for tensor in tensors.iter_mut() {
            for v in tensor.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Trainable-parameter count of one LSTM cell with its output head:
/// `4U² + 4UI + UO + 3U`.
pub fn param_count(units: usize, inputs: usize, outputs: usize) -> usize {
    assert!(
        units > 0 && inputs > 0 && outputs > 0,
        "param_count: all arguments must be positive"
    );
    4 * units * units + 4 * units * inputs + units * outputs + 3 * units
}

pub mod check {
    //! Central finite-difference verification of the analytic gradients,
    //! shared by the test suite and the `gradcheck` command.

    use super::*;
    use crate::cells::{lstm_forward, COMPONENTS};

    const FD_STEP: f64 = 1e-6;
    /// Entries below this magnitude are compared on an absolute scale so
    /// that finite-difference roundoff cannot dominate the ratio.
    const REL_FLOOR: f64 = 1e-3;

    pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
    }

    #[derive(Clone, Debug)]
    pub struct CheckEntry {
        pub case: String,
        pub tensor: String,
        pub max_rel_err: f64,
    }

    #[derive(Clone, Debug, Default)]
    pub struct CheckReport {
        pub entries: Vec<CheckEntry>,
    }

    impl CheckReport {
        pub fn max_rel_err(&self) -> f64 {
            self.entries
                .iter()
                .map(|e| e.max_rel_err)
                .fold(0.0, f64::max)
        }

        pub fn passes(&self, tolerance: f64) -> bool {
            self.max_rel_err() < tolerance
        }

        pub fn failures(&self, tolerance: f64) -> Vec<&CheckEntry> {
            self.entries
                .iter()
                .filter(|e| e.max_rel_err >= tolerance)
                .collect()
        }
    }

    fn random_vec(len: usize, rng: &mut Rng, scale: f64) -> Vec1 {
        Vec1::from_vec((0..len).map(|_| rng.uniform(-scale, scale)).collect())
    }

    struct Instance {
        w: LstmWeights,
        head: HeadWeights,
        h0: Vec1,
        c0: Vec1,
        xs: Vec<Vec1>,
        labels: Vec<f64>,
    }

    fn random_instance(units: usize, inputs: usize, steps: usize, rng: &mut Rng) -> Instance {
        Instance {
            w: LstmWeights::glorot(units, inputs, rng),
            head: HeadWeights::glorot(units, &[4, 1], rng),
            h0: random_vec(units, rng, 0.5),
            c0: random_vec(units, rng, 0.5),
            xs: (0..steps).map(|_| random_vec(inputs, rng, 1.0)).collect(),
            labels: (0..steps).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        }
    }

    fn run_trajectory(inst: &Instance, w: &LstmWeights) -> Vec<CellState> {
        let mut trajectory = Vec::with_capacity(inst.xs.len());
        let mut h = inst.h0.clone();
        let mut c = inst.c0.clone();
        for x in &inst.xs {
            let state = lstm_forward(w, x, &h, &c);
            h = state.h.clone();
            c = state.c.clone();
            trajectory.push(state);
        }
        trajectory
    }

    fn bptt_loss(inst: &Instance, w: &LstmWeights, head: &HeadWeights) -> f64 {
        let trajectory = run_trajectory(inst, w);
        let y_hat: Vec<f64> = trajectory.iter().map(|s| head.forward(&s.h)).collect();
        mse_temporal(&inst.labels, &y_hat)
    }

    fn optm_loss(inst: &Instance, w: &LstmWeights, head: &HeadWeights, selected: Component) -> f64 {
        // Selection held fixed: it is a constant to the backward pass.
        let state = lstm_forward(w, &inst.xs[0], &inst.h0, &inst.c0);
        let y_hat = head.forward(selected.extract(&state));
        mse_temporal(&inst.labels[..1], &[y_hat])
    }

    /// Central finite differences of `loss` with respect to every entry of
    /// every tensor, compared entrywise against the analytic gradients.
    fn check_tensors(
        case: &str,
        mut w: LstmWeights,
        mut head: HeadWeights,
        analytic: &Gradients,
        loss: impl Fn(&LstmWeights, &HeadWeights) -> f64,
        report: &mut CheckReport,
    ) {
        let mut cell_errs = vec![0.0f64; LstmWeights::TENSOR_NAMES.len()];
        for (ti, max_err) in cell_errs.iter_mut().enumerate() {
            let len = analytic.cell.tensors()[ti].len();
            for j in 0..len {
                let original = w.tensors_mut()[ti][j];
                w.tensors_mut()[ti][j] = original + FD_STEP;
                let up = loss(&w, &head);
                w.tensors_mut()[ti][j] = original - FD_STEP;
                let down = loss(&w, &head);
                w.tensors_mut()[ti][j] = original;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let err = relative_error(analytic.cell.tensors()[ti][j], numeric);
                *max_err = max_err.max(err);
            }
        }
        for (ti, name) in LstmWeights::TENSOR_NAMES.iter().enumerate() {
            report.entries.push(CheckEntry {
                case: case.to_string(),
                tensor: (*name).to_string(),
                max_rel_err: cell_errs[ti],
            });
        }

        let head_names = head.tensor_names();
        let mut head_errs = vec![0.0f64; head_names.len()];
        for (ti, max_err) in head_errs.iter_mut().enumerate() {
            let len = analytic.head.tensors()[ti].len();
            for j in 0..len {
                let original = head.tensors_mut()[ti][j];
                head.tensors_mut()[ti][j] = original + FD_STEP;
                let up = loss(&w, &head);
                head.tensors_mut()[ti][j] = original - FD_STEP;
                let down = loss(&w, &head);
                head.tensors_mut()[ti][j] = original;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let err = relative_error(analytic.head.tensors()[ti][j], numeric);
                *max_err = max_err.max(err);
            }
        }
        for (ti, name) in head_names.iter().enumerate() {
            report.entries.push(CheckEntry {
                case: case.to_string(),
                tensor: name.clone(),
                max_rel_err: head_errs[ti],
            });
        }
    }

    /// Gradient check for prototype-LSTM backpropagation through time at
    /// the given step counts (U=2, D=3).
    pub fn check_bptt(seed: u64, steps: &[usize], perturb: f64) -> Result<CheckReport> {
        let mut report = CheckReport::default();
        let mut rng = Rng::seeded(seed);
        for &t in steps {
            let inst = random_instance(2, 3, t, &mut rng);
            let trajectory = run_trajectory(&inst, &inst.w);
            let mut analytic = bptt_grads(&inst.w, &inst.head, &trajectory, &inst.labels)?;
            if perturb != 0.0 {
                analytic.cell.w_f.as_mut_slice()[0] += perturb;
            }
            check_tensors(
                &format!("bptt_T{t}"),
                inst.w.clone(),
                inst.head.clone(),
                &analytic,
                |w, head| bptt_loss(&inst, w, head),
                &mut report,
            );
        }
        Ok(report)
    }

    /// Gradient check for the optimum-output local backward pass with each
    /// of the six selectable components.
    pub fn check_optm_local(seed: u64, perturb: f64) -> Result<CheckReport> {
        let mut report = CheckReport::default();
        let mut rng = Rng::seeded(seed.wrapping_add(1));
        for &selected in COMPONENTS.iter() {
            let inst = random_instance(2, 3, 1, &mut rng);
            let state = lstm_forward(&inst.w, &inst.xs[0], &inst.h0, &inst.c0);
            let mut analytic =
                optm_local_grads(selected, &state, &inst.w, &inst.head, inst.labels[0])?;
            if perturb != 0.0 {
                analytic.cell.w_g.as_mut_slice()[0] += perturb;
            }
            check_tensors(
                &format!("optm_{}", selected.name()),
                inst.w.clone(),
                inst.head.clone(),
                &analytic,
                |w, head| optm_loss(&inst, w, head, selected),
                &mut report,
            );
        }
        Ok(report)
    }

    /// The full gradient-check suite: BPTT at T ∈ {1,2,3} plus the local
    /// pass for every component. `perturb` injects a deliberate bug into
    /// one analytic tensor so the harness can prove it catches failures.
    pub fn run_full(seed: u64, perturb: f64) -> Result<CheckReport> {
        let mut report = check_bptt(seed, &[1, 2, 3], perturb)?;
        let optm = check_optm_local(seed, perturb)?;
        report.entries.extend(optm.entries);
        Ok(report)
    }
}
